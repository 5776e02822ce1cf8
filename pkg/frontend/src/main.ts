import { ApiClient } from './api.js';
import { renderAnalysisScreen } from './analysis.js';
import { renderRefinementScreen } from './refine.js';
import { UiState } from './state.js';

async function boot(): Promise<void> {
  const api = new ApiClient();
  const state = new UiState();
  const app = document.getElementById('app');
  if (!app) return;

  const nav = document.createElement('nav');
  const analysisTab = document.createElement('button');
  analysisTab.textContent = 'Analysis';
  const refineTab = document.createElement('button');
  refineTab.textContent = 'Refinement';
  nav.append(analysisTab, refineTab);
  const screen = document.createElement('main');
  app.append(nav, screen);

  const models = await api.models();
  const current = models.find((m) => m.current) ?? models[0];
  const videos = await api.videos();

  analysisTab.addEventListener('click', async () => {
    if (!videos.length) return;
    screen.replaceChildren(await renderAnalysisScreen(api, state, videos[0]));
  });
  refineTab.addEventListener('click', async () => {
    screen.replaceChildren(
      await renderRefinementScreen(api, state, state.modelId ?? current.id),
    );
  });

  refineTab.click();
}

void boot();
