/** The surface views use to talk back to the application. */
export interface Actions {
  navigate(hash: string): void;
  dismissBanner(): void;
  retryBanner(): void;
  setPendingEdit(index: number, raw: string): void;
  applyEdits(): void;
  resetBaseline(): void;
  loadBaselineReport(): void;
  runEval(split: "train" | "test", onProjection: boolean): void;
}
