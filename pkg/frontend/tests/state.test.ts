import { describe, expect, it } from 'vitest';

import { UiState } from '../src/state.js';
import { fixtures } from './fixture-api.js';

const report = fixtures.refineReport as never;

describe('UiState', () => {
  it('gates commit on a pending report', () => {
    const state = new UiState();
    expect(state.canCommit).toBe(false);
    state.setPending(report);
    expect(state.canCommit).toBe(true);
    state.clearPending();
    expect(state.canCommit).toBe(false);
  });

  it('clears the pending report on model switch', () => {
    const state = new UiState();
    state.selectModel('m-aaa');
    state.setPending(report);
    state.selectModel('m-bbb');
    expect(state.pendingReport).toBeNull();
    expect(state.selectedPrototypes.size).toBe(0);
  });

  it('keeps the pending report when reselecting the same model', () => {
    const state = new UiState();
    state.selectModel('m-aaa');
    state.setPending(report);
    state.selectModel('m-aaa');
    expect(state.pendingReport).not.toBeNull();
  });

  it('validates temporal ranges against the video bounds', () => {
    const state = new UiState();
    state.selectVideo('vid0000', 20);
    expect(state.range).toEqual([0, 19]);
    state.setRange(10, 12, 20);
    expect(state.range).toEqual([10, 12]);
    expect(() => state.setRange(9, 3, 20)).toThrow(RangeError);
    expect(() => state.setRange(0, 25, 20)).toThrow(RangeError);
  });

  it('toggles prototype selection', () => {
    const state = new UiState();
    state.togglePrototype('p1');
    state.togglePrototype('p2');
    state.togglePrototype('p1');
    expect([...state.selectedPrototypes]).toEqual(['p2']);
  });
});
