import { ApiClient, ApiError, ConnectionError } from "./api";
import type {
  CaseDetail,
  CaseSummary,
  ClusteringResponse,
  Edit,
  ModelInfo,
  Prediction,
  ReportResponse,
  StructuredError,
} from "./types";

export type Route =
  | { kind: "cases" }
  | { kind: "case"; caseId: string }
  | { kind: "compare"; caseId: string }
  | { kind: "eval" };

export function parseRoute(hash: string): Route {
  const parts = hash.replace(/^#/, "").split("/").filter(Boolean);
  if (parts[0] === "case" && parts[1]) {
    return { kind: "case", caseId: decodeURIComponent(parts[1]) };
  }
  if (parts[0] === "compare" && parts[1]) {
    return { kind: "compare", caseId: decodeURIComponent(parts[1]) };
  }
  if (parts[0] === "eval") {
    return { kind: "eval" };
  }
  return { kind: "cases" };
}

export function routeHash(route: Route): string {
  switch (route.kind) {
    case "cases":
      return "#/";
    case "case":
      return `#/case/${encodeURIComponent(route.caseId)}`;
    case "compare":
      return `#/compare/${encodeURIComponent(route.caseId)}`;
    case "eval":
      return "#/eval";
  }
}

export interface BannerState {
  kind: "error" | "connection";
  error: StructuredError | null;
  message: string;
  retry: (() => void) | null;
}

export interface CaseViewState {
  caseId: string;
  detail: CaseDetail | null;
  /** Prediction with no edits applied; fixed for the lifetime of the case view. */
  baseline: Prediction | null;
  /** The most recent server prediction; the displayed class always comes from here. */
  current: Prediction | null;
  /** Concept index -> exact input string; mirrors slider state verbatim. */
  pendingEdits: Map<number, string>;
  /** Concept indices the service rejected with a 422 on the last apply. */
  erroredConcepts: Set<number>;
  baselineReport: ReportResponse | null;
  intervenedReport: ReportResponse | null;
  /** Canonical JSON of the edits the loaded comparison corresponds to. */
  comparedEditsKey: string | null;
}

export interface EvalState {
  split: "train" | "test";
  onProjection: boolean;
  result: ClusteringResponse | null;
}

export interface AppState {
  route: Route;
  model: ModelInfo | null;
  cases: CaseSummary[] | null;
  banner: BannerState | null;
  caseView: CaseViewState | null;
  evalView: EvalState | null;
}

function isAbort(err: unknown): boolean {
  // Name check only: an AbortError may come from a different realm's
  // DOMException class and fail instanceof tests against this realm's Error.
  return (
    typeof err === "object" &&
    err !== null &&
    (err as { name?: unknown }).name === "AbortError"
  );
}

function freshCaseView(caseId: string): CaseViewState {
  return {
    caseId,
    detail: null,
    baseline: null,
    current: null,
    pendingEdits: new Map(),
    erroredConcepts: new Set(),
    baselineReport: null,
    intervenedReport: null,
    comparedEditsKey: null,
  };
}

/** Sorted edit list assembled from the exact pending input strings. */
export function editsOf(view: CaseViewState): Edit[] {
  return [...view.pendingEdits.entries()]
    .sort((a, b) => a[0] - b[0])
    .map(([index, raw]) => ({ index, value: Number(raw) }));
}

/** Which concept rows a 422 refers to, recovered from the error body. */
export function offendingConcepts(body: StructuredError, sent: Edit[]): Set<number> {
  const byIndex = body.message.match(/concept index (\d+)/);
  if (byIndex) {
    return new Set([Number(byIndex[1])]);
  }
  const byValue = body.message.match(/concept value (-?[0-9.eE+-]+)/);
  if (byValue) {
    const matching = sent.filter((edit) => String(edit.value) === byValue[1]);
    if (matching.length > 0) {
      return new Set(matching.map((edit) => edit.index));
    }
  }
  return new Set(sent.map((edit) => edit.index));
}

/** All view state plus every service interaction; renderers stay passive. */
export class WorkbenchStore {
  readonly state: AppState = {
    route: { kind: "cases" },
    model: null,
    cases: null,
    banner: null,
    caseView: null,
    evalView: null,
  };

  private reportSeq = 0;
  private reportAbort: AbortController | null = null;

  constructor(
    private readonly api: ApiClient,
    private readonly onChange: () => void,
  ) {}

  private emit(): void {
    this.onChange();
  }

  private fail(err: unknown, retry: (() => void) | null): void {
    if (isAbort(err)) {
      return;
    }
    if (err instanceof ApiError) {
      this.state.banner = { kind: "error", error: err.body, message: err.message, retry: null };
    } else if (err instanceof ConnectionError) {
      this.state.banner = {
        kind: "connection",
        error: null,
        message: "The service could not be reached. It may be down or still starting.",
        retry,
      };
    } else {
      this.state.banner = {
        kind: "error",
        error: null,
        message: err instanceof Error ? err.message : String(err),
        retry: null,
      };
    }
    this.emit();
  }

  async navigate(route: Route): Promise<void> {
    this.state.route = route;
    this.emit();
    switch (route.kind) {
      case "cases":
        if (!this.state.cases || !this.state.model) {
          await this.loadHome();
        }
        return;
      case "case":
        await this.openCase(route.caseId);
        return;
      case "compare":
        await this.openCase(route.caseId);
        await this.loadComparison();
        return;
      case "eval":
        if (!this.state.evalView?.result) {
          await this.runEval(
            this.state.evalView?.split ?? "test",
            this.state.evalView?.onProjection ?? false,
          );
        }
        return;
    }
  }

  async loadHome(): Promise<void> {
    try {
      const [model, cases] = await Promise.all([this.api.getModel(), this.api.listCases()]);
      this.state.model = model;
      this.state.cases = cases.cases;
      this.emit();
    } catch (err) {
      this.fail(err, () => void this.loadHome());
    }
  }

  async openCase(caseId: string): Promise<void> {
    if (this.state.caseView?.caseId === caseId) {
      return;
    }
    const view = freshCaseView(caseId);
    this.state.caseView = view;
    this.emit();
    try {
      const [detail, baseline] = await Promise.all([
        this.api.getCase(caseId),
        this.api.classify(caseId),
      ]);
      if (this.state.caseView !== view) {
        return;
      }
      view.detail = detail;
      view.baseline = baseline;
      view.current = baseline;
      this.emit();
    } catch (err) {
      this.fail(err, () => {
        this.state.caseView = null;
        void this.openCase(caseId);
      });
    }
  }

  setPendingEdit(index: number, raw: string): void {
    const view = this.state.caseView;
    if (!view) {
      return;
    }
    view.pendingEdits.set(index, raw);
    this.emit();
  }

  async applyEdits(): Promise<void> {
    const view = this.state.caseView;
    if (!view || !view.baseline) {
      return;
    }
    const edits = editsOf(view);
    if (edits.length === 0) {
      // Nothing changed: restore the baseline locally, no server call.
      view.current = view.baseline;
      view.erroredConcepts = new Set();
      this.emit();
      return;
    }
    try {
      const prediction = await this.api.intervene(view.caseId, edits);
      if (this.state.caseView !== view) {
        return;
      }
      view.current = prediction;
      view.erroredConcepts = new Set();
      this.state.banner = null;
      this.emit();
    } catch (err) {
      if (err instanceof ApiError && err.status === 422) {
        view.erroredConcepts = offendingConcepts(err.body, edits);
      }
      this.fail(err, err instanceof ConnectionError ? () => void this.applyEdits() : null);
    }
  }

  resetBaseline(): void {
    const view = this.state.caseView;
    if (!view) {
      return;
    }
    view.pendingEdits = new Map();
    view.erroredConcepts = new Set();
    view.current = view.baseline;
    view.intervenedReport = null;
    view.comparedEditsKey = null;
    this.emit();
  }

  /** Explicitly fetch the no-edit report for the detail view. */
  async loadBaselineReport(): Promise<void> {
    const view = this.state.caseView;
    if (!view || view.baselineReport) {
      return;
    }
    const seq = ++this.reportSeq;
    this.reportAbort?.abort();
    const abort = new AbortController();
    this.reportAbort = abort;
    try {
      const report = await this.api.report(view.caseId, [], abort.signal);
      if (seq !== this.reportSeq || this.state.caseView !== view) {
        return;
      }
      view.baselineReport = report;
      this.emit();
    } catch (err) {
      if (seq !== this.reportSeq) {
        return;
      }
      this.fail(err, err instanceof ConnectionError ? () => void this.loadBaselineReport() : null);
    }
  }

  /** Load the report pair for the current edits.
   *
   * At most one report request chain is in flight per case: a newer call
   * aborts and supersedes an older one. With no pending edits the report
   * endpoint is not called at all — the view shows its "no changes" state.
   */
  async loadComparison(): Promise<void> {
    const view = this.state.caseView;
    if (!view) {
      return;
    }
    const edits = editsOf(view);
    const key = JSON.stringify(edits);
    if (edits.length === 0) {
      view.intervenedReport = null;
      view.comparedEditsKey = key;
      this.emit();
      return;
    }
    if (view.comparedEditsKey === key && view.baselineReport && view.intervenedReport) {
      return;
    }
    const seq = ++this.reportSeq;
    this.reportAbort?.abort();
    const abort = new AbortController();
    this.reportAbort = abort;
    try {
      const [baseline, intervened] = await Promise.all([
        view.baselineReport
          ? Promise.resolve(view.baselineReport)
          : this.api.report(view.caseId, [], abort.signal),
        this.api.report(view.caseId, edits, abort.signal),
      ]);
      if (seq !== this.reportSeq || this.state.caseView !== view) {
        return;
      }
      view.baselineReport = baseline;
      view.intervenedReport = intervened;
      view.comparedEditsKey = key;
      this.emit();
    } catch (err) {
      if (seq !== this.reportSeq) {
        return;
      }
      this.fail(err, err instanceof ConnectionError ? () => void this.loadComparison() : null);
    }
  }

  async runEval(split: "train" | "test", onProjection: boolean): Promise<void> {
    const evalView: EvalState = { split, onProjection, result: null };
    this.state.evalView = evalView;
    this.emit();
    try {
      const result = await this.api.evalClustering(split, onProjection);
      if (this.state.evalView !== evalView) {
        return;
      }
      evalView.result = result;
      this.emit();
    } catch (err) {
      this.fail(err, () => void this.runEval(split, onProjection));
    }
  }

  dismissBanner(): void {
    this.state.banner = null;
    this.emit();
  }

  retryBanner(): void {
    const retry = this.state.banner?.retry;
    this.state.banner = null;
    this.emit();
    retry?.();
  }
}
