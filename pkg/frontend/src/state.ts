import type { ImpactReport } from './types.js';

export type ViewMode = 'frames' | 'flow';

/**
 * Client-side UI state. The commit button is gated on `pendingReport`:
 * only a fresh dry-run report carries a valid token, and any commit or
 * model switch clears it.
 */
export class UiState {
  modelId: string | null = null;
  videoId: string | null = null;
  range: [number, number] | null = null;
  selectedPrototypes = new Set<string>();
  pendingReport: ImpactReport | null = null;
  viewMode: ViewMode = 'frames';
  animate = true;

  get canCommit(): boolean {
    return this.pendingReport !== null;
  }

  selectModel(id: string): void {
    if (id !== this.modelId) {
      this.modelId = id;
      this.pendingReport = null;
      this.selectedPrototypes.clear();
    }
  }

  selectVideo(id: string, frameCount: number): void {
    this.videoId = id;
    this.range = [0, frameCount - 1];
  }

  setRange(start: number, end: number, frameCount: number): void {
    if (start > end || start < 0 || end >= frameCount) {
      throw new RangeError(`range ${start}–${end} outside 0–${frameCount - 1}`);
    }
    this.range = [start, end];
  }

  setPending(report: ImpactReport): void {
    this.pendingReport = report;
  }

  clearPending(): void {
    this.pendingReport = null;
  }

  togglePrototype(id: string): void {
    if (this.selectedPrototypes.has(id)) this.selectedPrototypes.delete(id);
    else this.selectedPrototypes.add(id);
  }
}
