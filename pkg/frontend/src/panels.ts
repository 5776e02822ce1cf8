// Performance panel pieces shared by the two screens.

import { barChart, radarChart, rocChart } from './charts.js';
import {
  CLASS_COLORS,
  type Aggregate,
  type Confusion,
  type DensityHistogram,
  type MetricsReport,
  type RadarSeries,
} from './types.js';

function div(cls: string, ...children: (Node | string)[]): HTMLDivElement {
  const node = document.createElement('div');
  node.className = cls;
  node.append(...children);
  return node;
}

export function formatSigned(delta: number): string {
  if (delta > 0) return `+${delta}`;
  return String(delta);
}

// Confusion cells where an increase is an improvement.
const GOOD_UP: (keyof Confusion)[] = ['tp', 'tn'];

/**
 * Confusion matrix with after-counts and signed deltas against the
 * pre-operation counts, colored green/red by improvement direction.
 */
export function confusionPanel(before: Confusion, after: Confusion): HTMLElement {
  const panel = div('confusion-panel');
  const table = document.createElement('table');
  table.className = 'confusion';
  const order: (keyof Confusion)[] = ['tp', 'fn', 'fp', 'tn'];
  for (const row of [order.slice(0, 2), order.slice(2)]) {
    const tr = document.createElement('tr');
    for (const cell of row) {
      const td = document.createElement('td');
      td.className = `cell-${cell}`;
      const count = document.createElement('span');
      count.className = 'count';
      count.textContent = `${cell.toUpperCase()} ${after[cell]}`;
      td.appendChild(count);
      const delta = after[cell] - before[cell];
      const deltaSpan = document.createElement('span');
      deltaSpan.className = 'delta';
      deltaSpan.textContent = ` ${formatSigned(delta)}`;
      if (delta !== 0) {
        const improved = GOOD_UP.includes(cell) ? delta > 0 : delta < 0;
        deltaSpan.classList.add(improved ? 'delta-good' : 'delta-bad');
      }
      td.appendChild(deltaSpan);
      tr.appendChild(td);
    }
    table.appendChild(tr);
  }
  panel.appendChild(table);
  return panel;
}

/** Radar with the three series of an impact report. */
export function radarPanel(radar: RadarSeries): HTMLElement {
  const panel = div('radar-panel');
  panel.appendChild(
    radarChart({
      axes: radar.axes,
      series: [
        { label: 'initial', values: radar.initial, color: '#9ca3af' },
        { label: 'current', values: radar.current, color: '#2563eb' },
        { label: 'candidate', values: radar.candidate, color: '#f59e0b' },
      ],
    }),
  );
  return panel;
}

/** Before/after ROC curves in one chart. */
export function dualRocPanel(before: MetricsReport, after: MetricsReport): HTMLElement {
  const panel = div('roc-panel');
  panel.appendChild(
    rocChart([
      { label: 'before', points: before.roc, color: '#9ca3af' },
      { label: 'after', points: after.roc, color: '#f59e0b' },
    ]),
  );
  const caption = document.createElement('p');
  caption.className = 'roc-caption';
  caption.textContent = `AUC ${before.auc.toFixed(4)} → ${after.auc.toFixed(4)}`;
  panel.appendChild(caption);
  return panel;
}

/** Landmark density histograms, one bar group per landmark region. */
export function densityPanel(density: DensityHistogram, title: string): HTMLElement {
  const panel = div('density-panel');
  const heading = document.createElement('h4');
  heading.textContent = title;
  panel.appendChild(heading);
  const bars = Object.entries(density).flatMap(([name, counts]) => [
    { label: `${name} (p)`, value: counts.pristine, color: CLASS_COLORS.pristine },
    { label: `${name} (m)`, value: counts.manipulated, color: CLASS_COLORS.manipulated },
  ]);
  panel.appendChild(barChart(bars));
  return panel;
}

/**
 * Aggregate numbers for a temporal range, rendered verbatim from the
 * /aggregate payload (no client-side averaging).
 */
export function aggregatePanel(agg: Aggregate, protoIds: string[]): HTMLElement {
  const panel = div('aggregate-panel');
  const probs = document.createElement('p');
  probs.className = 'agg-probs';
  const [p0, p1] = agg.mean_probs;
  probs.innerHTML =
    `frames ${agg.frame_range[0]}–${agg.frame_range[1]}: ` +
    `<span class="prob pristine" data-value="${p0}">${p0}</span> / ` +
    `<span class="prob manipulated" data-value="${p1}">${p1}</span>`;
  panel.appendChild(probs);
  const bars = agg.mean_contributions.map((row, j) => {
    const own = Math.abs(row[0]) >= Math.abs(row[1]) ? row[0] : row[1];
    const cls = Math.abs(row[0]) >= Math.abs(row[1]) ? 'pristine' : 'manipulated';
    return { label: protoIds[j], value: own, color: CLASS_COLORS[cls as 'pristine'] };
  });
  panel.appendChild(barChart(bars));
  const top = document.createElement('p');
  top.className = 'agg-top-windows';
  top.textContent = `strongest windows: ${agg.top_windows.join(', ')}`;
  panel.appendChild(top);
  return panel;
}
