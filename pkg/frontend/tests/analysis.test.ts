import { beforeEach, describe, expect, it } from 'vitest';

import { ApiClient } from '../src/api.js';
import { renderAnalysisScreen } from '../src/analysis.js';
import { UiState } from '../src/state.js';
import { CLASS_COLORS } from '../src/types.js';
import { createFixtureServer, fixtures } from './fixture-api.js';

async function mountScreen() {
  const server = createFixtureServer();
  const api = new ApiClient(server.fetch);
  const state = new UiState();
  const video = fixtures.videos[0];
  const root = await renderAnalysisScreen(api, state, video as never);
  document.body.replaceChildren(root);
  return { root, state, video };
}

function flush(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}

async function applyRange(root: HTMLElement, start: number, end: number) {
  const form = root.querySelector<HTMLFormElement>('.range-selector')!;
  form.querySelector<HTMLInputElement>('input[name=start]')!.value = String(start);
  form.querySelector<HTMLInputElement>('input[name=end]')!.value = String(end);
  form.dispatchEvent(new Event('submit', { cancelable: true }));
  await flush();
}

describe('analysis screen', () => {
  beforeEach(() => {
    document.body.replaceChildren();
  });

  it('shows the whole-video aggregate numbers verbatim', async () => {
    const { root } = await mountScreen();
    const [p0, p1] = fixtures.aggregateFull.mean_probs;
    const pristine = root.querySelector<HTMLElement>('.agg-probs .prob.pristine')!;
    const manipulated = root.querySelector<HTMLElement>('.agg-probs .prob.manipulated')!;
    // every displayed number round-trips from the /aggregate payload
    expect(pristine.dataset.value).toBe(String(p0));
    expect(manipulated.dataset.value).toBe(String(p1));
    expect(pristine.textContent).toBe(String(p0));
    expect(manipulated.textContent).toBe(String(p1));
    expect(root.querySelector('.agg-top-windows')!.textContent).toBe(
      `strongest windows: ${fixtures.aggregateFull.top_windows.join(', ')}`,
    );
  });

  it('narrowing the range re-queries /aggregate for that window', async () => {
    const { root } = await mountScreen();
    const [start, end] = fixtures.meta.window1_range;
    await applyRange(root, start, end);
    const probs = root.querySelectorAll<HTMLElement>('.agg-probs .prob');
    expect(probs[0].dataset.value).toBe(String(fixtures.aggregateWindow1.mean_probs[0]));
    expect(probs[1].dataset.value).toBe(String(fixtures.aggregateWindow1.mean_probs[1]));
    // single-window aggregate is that window's trace entry
    expect(fixtures.aggregateWindow1.mean_probs).toEqual(
      fixtures.trace.windows[1].probs,
    );
  });

  it('rejects an inverted range client-side and keeps the last aggregate', async () => {
    const { root, state } = await mountScreen();
    await applyRange(root, 9, 3);
    expect(root.querySelector('.range-selector .error-banner')).not.toBeNull();
    expect(state.range).toEqual([0, fixtures.videos[0].frame_count - 1]);
    expect(root.querySelector('.agg-probs')).not.toBeNull();
  });

  it('uses pristine blue and manipulated red for the score lines', async () => {
    const { root } = await mountScreen();
    const pristineLine = root.querySelector<SVGElement>('.score-line.pristine')!;
    const manipulatedLine = root.querySelector<SVGElement>('.score-line.manipulated')!;
    expect(pristineLine.getAttribute('stroke')).toBe(CLASS_COLORS.pristine);
    expect(manipulatedLine.getAttribute('stroke')).toBe(CLASS_COLORS.manipulated);
    const pts = pristineLine.getAttribute('points')!.split(' ');
    expect(pts).toHaveLength(fixtures.trace.windows.length);
  });
});
