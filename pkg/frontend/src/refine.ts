// Model exploration and refinement screen: weight-sorted prototype lists,
// detail view, candidate gallery + scatter, performance panel and the
// dry-run → commit workflow.

import type { ApiClient } from './api.js';
import { ApiError } from './api.js';
import { scatterChart } from './charts.js';
import { confusionPanel, densityPanel, dualRocPanel, radarPanel } from './panels.js';
import type { UiState } from './state.js';
import {
  CLASS_COLORS,
  type CandidateInfo,
  type ImpactReport,
  type PrototypeInfo,
} from './types.js';

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  cls?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  return node;
}

function prototypeList(
  protos: PrototypeInfo[],
  cls: 'pristine' | 'manipulated',
  state: UiState,
): HTMLElement {
  const list = el('ul', `proto-list ${cls}`);
  list.style.borderColor = CLASS_COLORS[cls];
  // server order is weight-descending; filtering preserves it
  for (const p of protos.filter((q) => q.class_name === cls)) {
    const item = el('li', 'proto-item');
    item.dataset.id = p.id;
    item.dataset.weightOwn = String(p.weight_own);
    const checkbox = el('input');
    checkbox.type = 'checkbox';
    checkbox.addEventListener('change', () => state.togglePrototype(p.id));
    const label = el('span', 'proto-label');
    label.textContent = `${p.id} (${p.weight_own.toFixed(3)})`;
    const strip = el('img', 'proto-strip');
    strip.src = p.strip_url;
    item.append(checkbox, label, strip);
    list.appendChild(item);
  }
  return list;
}

function citationText(c: CandidateInfo): string {
  return `${c.sample_id} @ cell (${c.cell[0]}, ${c.cell[1]}), frames ${c.frame_range[0]}–${c.frame_range[1]}`;
}

function performancePanel(report: ImpactReport): HTMLElement {
  const panel = el('div', 'performance-panel');
  panel.appendChild(radarPanel(report.radar));
  panel.appendChild(confusionPanel(report.before.confusion, report.after.confusion));
  panel.appendChild(dualRocPanel(report.before, report.after));
  panel.appendChild(densityPanel(report.density_before, 'density before'));
  panel.appendChild(densityPanel(report.density_after, 'density after'));
  const meta = el('p', 'report-meta');
  meta.textContent =
    `${report.op.kind} → ${report.candidate_model_id} ` +
    `(${report.elapsed_ms.toFixed(0)} ms)`;
  panel.appendChild(meta);
  return panel;
}

export async function renderRefinementScreen(
  api: ApiClient,
  state: UiState,
  modelId: string,
): Promise<HTMLElement> {
  state.selectModel(modelId);
  const protos = await api.prototypes(modelId);

  const root = el('section', 'refinement-screen');
  const lists = el('div', 'proto-lists');
  lists.appendChild(prototypeList(protos, 'pristine', state));
  lists.appendChild(prototypeList(protos, 'manipulated', state));
  root.appendChild(lists);

  const detailHolder = el('div', 'detail-holder');
  root.appendChild(detailHolder);

  const reportHolder = el('div', 'report-holder');
  root.appendChild(reportHolder);

  const statusLine = el('p', 'status-line');
  root.appendChild(statusLine);

  const showReport = (report: ImpactReport) => {
    state.setPending(report);
    reportHolder.replaceChildren(performancePanel(report));
    commitButton.disabled = !state.canCommit;
  };

  const dryRunButton = el('button', 'dry-run-delete');
  dryRunButton.textContent = 'dry-run delete';
  dryRunButton.addEventListener('click', async () => {
    const ids = [...state.selectedPrototypes];
    if (!ids.length || !state.modelId) return;
    try {
      showReport(await api.refine(state.modelId, { kind: 'delete', delete_ids: ids }));
      statusLine.textContent = '';
    } catch (err) {
      statusLine.textContent = (err as Error).message;
    }
  });
  root.appendChild(dryRunButton);

  const commitButton = el('button', 'commit');
  commitButton.textContent = 'commit';
  commitButton.disabled = true;
  commitButton.addEventListener('click', async () => {
    if (!state.pendingReport || !state.modelId) return;
    try {
      const resp = await api.commit(state.modelId, state.pendingReport.token);
      state.clearPending();
      state.modelId = resp.model_id;
      commitButton.disabled = true;
      statusLine.textContent = `committed as ${resp.model_id}`;
      root.dataset.modelId = resp.model_id;
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        state.clearPending();
        commitButton.disabled = true;
        statusLine.textContent = 'stale dry run, please re-run it';
      } else {
        statusLine.textContent = (err as Error).message;
      }
    }
  });
  root.appendChild(commitButton);

  const showDetail = async (protoId: string) => {
    const detail = await api.prototypeDetail(protoId, state.modelId ?? undefined);
    const panel = el('div', 'proto-detail');
    const heading = el('h3');
    heading.textContent = `${detail.id} — ${detail.landmark}`;
    panel.appendChild(heading);
    const strip = el('img', 'detail-strip');
    strip.src = detail.strip_url;
    const prp = el('img', 'detail-prp');
    prp.src = detail.prp_url;
    panel.append(strip, prp);
    if (detail.source) {
      const cite = el('p', 'source-citation');
      cite.textContent = `source: ${detail.source.sample_id} @ cell (${detail.source.cell[0]}, ${detail.source.cell[1]})`;
      panel.appendChild(cite);
    }
    const candidates = await api.candidates(protoId, 8);
    const gallery = el('ul', 'candidate-gallery');
    for (const c of candidates) {
      const item = el('li', 'candidate-item');
      item.dataset.sampleId = c.sample_id;
      item.textContent = `${citationText(c)} d=${c.distance.toFixed(4)}`;
      item.addEventListener('click', async () => {
        if (!state.modelId) return;
        try {
          showReport(
            await api.refine(state.modelId, {
              kind: 'replace',
              proto_id: protoId,
              candidate: { sample_id: c.sample_id, cell: c.cell },
            }),
          );
        } catch (err) {
          statusLine.textContent = (err as Error).message;
        }
      });
      gallery.appendChild(item);
    }
    panel.appendChild(gallery);
    const embedding = await api.embedding(protoId, 8);
    const byId = new Map(candidates.map((c) => [c.sample_id, c]));
    panel.appendChild(
      scatterChart(
        embedding.points.map((p) => ({
          id: p.id,
          x: p.x,
          y: p.y,
          kind: p.kind,
          color: CLASS_COLORS[p.class_name],
        })),
        (id) => {
          const hit = byId.get(id.split('@')[0]);
          const cite = el('p', 'scatter-citation');
          cite.textContent = hit ? citationText(hit) : id;
          panel.appendChild(cite);
        },
      ),
    );
    detailHolder.replaceChildren(panel);
  };

  lists.querySelectorAll<HTMLElement>('.proto-item .proto-label').forEach((label) => {
    label.addEventListener('click', () => {
      const id = (label.parentElement as HTMLElement).dataset.id;
      if (id) void showDetail(id);
    });
  });

  return root;
}
