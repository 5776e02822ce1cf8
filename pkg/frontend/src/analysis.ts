// Deepfake analysis screen: score timeline, per-prototype contributions and
// a temporal range selector backed by /aggregate.

import type { ApiClient } from './api.js';
import { scoreChart } from './charts.js';
import { aggregatePanel } from './panels.js';
import type { UiState } from './state.js';
import { CLASS_COLORS, type Trace, type VideoSummary } from './types.js';

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  cls?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  return node;
}

async function refreshAggregate(
  root: HTMLElement,
  api: ApiClient,
  state: UiState,
  trace: Trace,
): Promise<void> {
  const holder = root.querySelector('.aggregate-holder');
  if (!holder || !state.videoId || !state.range) return;
  holder.replaceChildren();
  try {
    const agg = await api.aggregate(state.videoId, state.range[0], state.range[1]);
    holder.appendChild(aggregatePanel(agg, trace.proto_ids));
  } catch (err) {
    const banner = el('p', 'error-banner');
    banner.textContent = `aggregate failed: ${(err as Error).message}`;
    holder.appendChild(banner);
  }
}

export async function renderAnalysisScreen(
  api: ApiClient,
  state: UiState,
  video: VideoSummary,
): Promise<HTMLElement> {
  state.selectVideo(video.id, video.frame_count);
  const trace = await api.trace(video.id);

  const root = el('section', 'analysis-screen');
  const title = el('h2');
  title.textContent = `${video.title} — ${video.label}`;
  title.style.color = CLASS_COLORS[video.label];
  root.appendChild(title);

  const chartHolder = el('div', 'score-chart-holder');
  chartHolder.appendChild(scoreChart(trace.windows));
  root.appendChild(chartHolder);

  const rangeForm = el('form', 'range-selector');
  const startInput = el('input');
  startInput.type = 'number';
  startInput.name = 'start';
  startInput.value = '0';
  const endInput = el('input');
  endInput.type = 'number';
  endInput.name = 'end';
  endInput.value = String(video.frame_count - 1);
  const apply = el('button');
  apply.type = 'submit';
  apply.textContent = 'apply range';
  rangeForm.append(startInput, endInput, apply);
  rangeForm.addEventListener('submit', (ev) => {
    ev.preventDefault();
    try {
      state.setRange(Number(startInput.value), Number(endInput.value), video.frame_count);
    } catch (err) {
      const banner = el('p', 'error-banner');
      banner.textContent = (err as Error).message;
      rangeForm.appendChild(banner);
      return;
    }
    void refreshAggregate(root, api, state, trace);
  });
  root.appendChild(rangeForm);

  root.appendChild(el('div', 'aggregate-holder'));
  await refreshAggregate(root, api, state, trace);
  return root;
}
