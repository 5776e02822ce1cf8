import { describe, expect, it } from 'vitest';

import { ApiClient, ApiError } from '../src/api.js';
import { createFixtureServer, fixtures } from './fixture-api.js';

describe('ApiClient', () => {
  // serving normalizes -0 to 0, so compare against the same round trip
  const wire = <T>(doc: T): T => JSON.parse(JSON.stringify(doc)) as T;

  it('returns fixture payloads verbatim', async () => {
    const server = createFixtureServer();
    const api = new ApiClient(server.fetch);
    expect(await api.models()).toEqual(wire(fixtures.models));
    expect(await api.videos()).toEqual(wire(fixtures.videos));
    expect(await api.trace(fixtures.meta.video_id)).toEqual(wire(fixtures.trace));
    expect(await api.metrics(fixtures.meta.model_id)).toEqual(wire(fixtures.metrics));
  });

  it('builds query strings for ranged and counted requests', async () => {
    const seen: string[] = [];
    const server = createFixtureServer();
    const api = new ApiClient((url, init) => {
      seen.push(url);
      return server.fetch(url, init);
    });
    await api.aggregate(fixtures.meta.video_id, 0, 19);
    await api.candidates(fixtures.meta.proto_id, 3);
    expect(seen[0]).toBe(`/v1/videos/${fixtures.meta.video_id}/aggregate?start=0&end=19`);
    expect(seen[1]).toBe(`/v1/prototypes/${fixtures.meta.proto_id}/candidates?count=3`);
  });

  it('throws ApiError with server detail on failures', async () => {
    const server = createFixtureServer();
    const api = new ApiClient(server.fetch);
    await expect(api.trace('nope')).rejects.toThrowError(ApiError);
    await expect(api.commit(fixtures.meta.model_id, 'bogus')).rejects.toMatchObject({
      status: 409,
    });
  });

  it('respects the candidate count parameter', async () => {
    const server = createFixtureServer();
    const api = new ApiClient(server.fetch);
    const three = await api.candidates(fixtures.meta.proto_id, 3);
    expect(three).toHaveLength(3);
    expect(three).toEqual(fixtures.candidates.slice(0, 3));
  });
});
