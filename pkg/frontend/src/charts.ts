// SVG chart builders. Everything here is pure rendering: values arrive from
// API payloads and are only scaled into pixel coordinates.

import { CLASS_COLORS, type ClassName } from './types.js';

const SVG_NS = 'http://www.w3.org/2000/svg';

export function svgEl<K extends keyof SVGElementTagNameMap>(
  tag: K,
  attrs: Record<string, string | number> = {},
): SVGElementTagNameMap[K] {
  const node = document.createElementNS(SVG_NS, tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, String(v));
  return node;
}

function frame(width: number, height: number, cls: string): SVGSVGElement {
  const svg = svgEl('svg', {
    width,
    height,
    viewBox: `0 0 ${width} ${height}`,
  });
  svg.classList.add(cls);
  return svg;
}

/** Per-window class probability lines (analysis screen, panel E). */
export function scoreChart(
  windows: { t: number; probs: [number, number] }[],
  width = 420,
  height = 120,
): SVGSVGElement {
  const svg = frame(width, height, 'score-chart');
  const pad = 8;
  const n = Math.max(windows.length - 1, 1);
  const x = (t: number) => pad + (t / n) * (width - 2 * pad);
  const y = (p: number) => height - pad - p * (height - 2 * pad);
  (['pristine', 'manipulated'] as ClassName[]).forEach((cls, ci) => {
    const pts = windows.map((w) => `${x(w.t)},${y(w.probs[ci])}`).join(' ');
    const line = svgEl('polyline', {
      points: pts,
      fill: 'none',
      stroke: CLASS_COLORS[cls],
      'stroke-width': 2,
    });
    line.classList.add('score-line', cls);
    svg.appendChild(line);
  });
  return svg;
}

export interface RocSeries {
  label: string;
  points: [number, number][];
  color: string;
}

/** One or more ROC curves plus the chance diagonal. */
export function rocChart(series: RocSeries[], size = 160): SVGSVGElement {
  const svg = frame(size, size, 'roc-chart');
  const pad = 6;
  const sx = (v: number) => pad + v * (size - 2 * pad);
  const sy = (v: number) => size - pad - v * (size - 2 * pad);
  svg.appendChild(
    svgEl('line', {
      x1: sx(0),
      y1: sy(0),
      x2: sx(1),
      y2: sy(1),
      stroke: '#9ca3af',
      'stroke-dasharray': '4 3',
    }),
  );
  for (const s of series) {
    const line = svgEl('polyline', {
      points: s.points.map(([fx, fy]) => `${sx(fx)},${sy(fy)}`).join(' '),
      fill: 'none',
      stroke: s.color,
      'stroke-width': 2,
    });
    line.classList.add('roc-line');
    line.dataset.label = s.label;
    svg.appendChild(line);
  }
  return svg;
}

export interface RadarInput {
  axes: string[];
  series: { label: string; values: number[]; color: string }[];
}

/** Radar polygon chart; values are percentages relative to the axis max. */
export function radarChart(input: RadarInput, size = 220): SVGSVGElement {
  const svg = frame(size, size, 'radar-chart');
  const cx = size / 2;
  const cy = size / 2;
  const r = size / 2 - 26;
  const n = input.axes.length;
  const ceiling = Math.max(
    100,
    ...input.series.flatMap((s) => s.values.filter((v) => Number.isFinite(v))),
  );
  const point = (i: number, v: number): [number, number] => {
    const angle = (2 * Math.PI * i) / n - Math.PI / 2;
    const rad = (Math.max(v, 0) / ceiling) * r;
    return [cx + rad * Math.cos(angle), cy + rad * Math.sin(angle)];
  };
  input.axes.forEach((name, i) => {
    const [ex, ey] = point(i, ceiling);
    svg.appendChild(
      svgEl('line', { x1: cx, y1: cy, x2: ex, y2: ey, stroke: '#e5e7eb' }),
    );
    const label = svgEl('text', {
      x: ex,
      y: ey,
      'font-size': 8,
      'text-anchor': 'middle',
    });
    label.classList.add('radar-axis-label');
    label.textContent = name;
    svg.appendChild(label);
  });
  for (const s of input.series) {
    const poly = svgEl('polygon', {
      points: s.values.map((v, i) => point(i, v).join(',')).join(' '),
      fill: s.color + '22',
      stroke: s.color,
      'stroke-width': 1.5,
    });
    poly.classList.add('radar-series');
    poly.dataset.label = s.label;
    svg.appendChild(poly);
  }
  return svg;
}

export interface Bar {
  label: string;
  value: number;
  color: string;
}

/** Horizontal bar chart (contributions, landmark density). */
export function barChart(bars: Bar[], width = 260, rowHeight = 16): SVGSVGElement {
  const height = bars.length * rowHeight + 4;
  const svg = frame(width, Math.max(height, rowHeight), 'bar-chart');
  const maxAbs = Math.max(...bars.map((b) => Math.abs(b.value)), 1e-12);
  const mid = width * 0.45;
  bars.forEach((b, i) => {
    const w = (Math.abs(b.value) / maxAbs) * (width - mid - 4);
    const y = i * rowHeight + 2;
    const rect = svgEl('rect', {
      x: b.value >= 0 ? mid : mid - w,
      y,
      width: w,
      height: rowHeight - 4,
      fill: b.color,
    });
    rect.classList.add('bar');
    rect.dataset.label = b.label;
    rect.dataset.value = String(b.value);
    svg.appendChild(rect);
    const text = svgEl('text', {
      x: 2,
      y: y + rowHeight - 7,
      'font-size': 9,
    });
    text.textContent = b.label;
    svg.appendChild(text);
  });
  return svg;
}

export interface ScatterPoint {
  id: string;
  x: number;
  y: number;
  kind: string;
  color: string;
}

/** 2D embedding scatter with click selection. */
export function scatterChart(
  points: ScatterPoint[],
  onSelect: (id: string) => void,
  size = 220,
): SVGSVGElement {
  const svg = frame(size, size, 'scatter-chart');
  const xs = points.map((p) => p.x);
  const ys = points.map((p) => p.y);
  const xMin = Math.min(...xs);
  const xMax = Math.max(...xs);
  const yMin = Math.min(...ys);
  const yMax = Math.max(...ys);
  const pad = 10;
  const sx = (v: number) =>
    pad + ((v - xMin) / Math.max(xMax - xMin, 1e-12)) * (size - 2 * pad);
  const sy = (v: number) =>
    size - pad - ((v - yMin) / Math.max(yMax - yMin, 1e-12)) * (size - 2 * pad);
  for (const p of points) {
    const dot = svgEl('circle', {
      cx: sx(p.x),
      cy: sy(p.y),
      r: p.kind === 'prototype' ? 6 : 4,
      fill: p.color,
      stroke: p.kind === 'prototype' ? '#111827' : 'none',
    });
    dot.classList.add('scatter-point', p.kind);
    dot.dataset.id = p.id;
    dot.addEventListener('click', () => onSelect(p.id));
    svg.appendChild(dot);
  }
  return svg;
}
