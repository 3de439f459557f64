import type {
  CaseDetail,
  CasesList,
  ClusteringResponse,
  Edit,
  ModelInfo,
  Prediction,
  ReportResponse,
  StructuredError,
} from "./types";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** A non-2xx response carrying the service's structured error body. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly body: StructuredError,
  ) {
    super(`${body.error_code}: ${body.message}`);
    this.name = "ApiError";
  }
}

/** The service could not be reached at all (down, refused, DNS). */
export class ConnectionError extends Error {
  constructor(readonly cause_message: string) {
    super("The service could not be reached.");
    this.name = "ConnectionError";
  }
}

function isAbort(err: unknown): boolean {
  // Realm-agnostic: DOMException from another global is not instanceof
  // this realm's Error, so only the name is reliable.
  return (
    typeof err === "object" &&
    err !== null &&
    (err as { name?: unknown }).name === "AbortError"
  );
}

/** Typed client for the cxreport REST API; the only module that talks HTTP. */
export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchImpl(this.baseUrl + path, init);
    } catch (err) {
      if (isAbort(err)) {
        throw err;
      }
      throw new ConnectionError(err instanceof Error ? err.message : String(err));
    }
    if (!response.ok) {
      let body: StructuredError;
      try {
        body = (await response.json()) as StructuredError;
      } catch {
        body = {
          error_code: "UnexpectedResponse",
          stage: null,
          message: `the service answered HTTP ${response.status} without a structured error body`,
        };
      }
      throw new ApiError(response.status, body);
    }
    return (await response.json()) as T;
  }

  private post<T>(path: string, payload: unknown, signal?: AbortSignal): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
      signal: signal ?? null,
    });
  }

  listCases(): Promise<CasesList> {
    return this.request<CasesList>("/api/cases");
  }

  getCase(caseId: string): Promise<CaseDetail> {
    return this.request<CaseDetail>(`/api/cases/${encodeURIComponent(caseId)}`);
  }

  getModel(): Promise<ModelInfo> {
    return this.request<ModelInfo>("/api/model");
  }

  classify(caseId: string): Promise<Prediction> {
    return this.post<Prediction>("/api/classify", { case_id: caseId });
  }

  intervene(caseId: string, edits: Edit[]): Promise<Prediction> {
    return this.post<Prediction>("/api/intervene", { case_id: caseId, edits });
  }

  report(caseId: string, edits: Edit[], signal?: AbortSignal): Promise<ReportResponse> {
    return this.post<ReportResponse>("/api/report", { case_id: caseId, edits }, signal);
  }

  evalClustering(split: "train" | "test", onProjection: boolean): Promise<ClusteringResponse> {
    return this.post<ClusteringResponse>("/api/eval/clustering", {
      use_dataset: true,
      split,
      on_projection: onProjection,
    });
  }
}
