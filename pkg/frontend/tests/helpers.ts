import { ApiClient, type FetchLike } from "../src/api";
import { App } from "../src/app";
import type {
  CaseDetail,
  CasesList,
  ClusteringResponse,
  ModelInfo,
  Prediction,
  ReportResponse,
  StructuredError,
} from "../src/types";

export interface RecordedRequest {
  url: string;
  method: string;
  body: unknown;
  aborted: boolean;
}

export function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

export function errorResponse(status: number, body: StructuredError): Response {
  return jsonResponse(body, status);
}

type Handler = (request: RecordedRequest) => Response | Promise<Response>;

/** Scripted fetch with request recording and abort propagation. */
export class FakeBackend {
  readonly requests: RecordedRequest[] = [];
  private readonly handlers: { pattern: RegExp; handler: Handler }[] = [];

  on(pattern: RegExp, handler: Handler): this {
    this.handlers.push({ pattern, handler });
    return this;
  }

  requestsTo(pattern: RegExp): RecordedRequest[] {
    return this.requests.filter((request) => pattern.test(request.url));
  }

  readonly fetch: FetchLike = (url, init) => {
    const record: RecordedRequest = {
      url,
      method: init?.method ?? "GET",
      body: typeof init?.body === "string" ? JSON.parse(init.body) : null,
      aborted: false,
    };
    this.requests.push(record);
    const match = this.handlers.find(({ pattern }) => pattern.test(url));
    if (!match) {
      return Promise.reject(new TypeError(`no scripted route for ${url}`));
    }
    const result = match.handler(record);
    const signal = init?.signal;
    if (!signal) {
      return Promise.resolve(result);
    }
    return new Promise<Response>((resolve, reject) => {
      const onAbort = () => {
        record.aborted = true;
        reject(new DOMException("The operation was aborted.", "AbortError"));
      };
      if (signal.aborted) {
        onAbort();
        return;
      }
      signal.addEventListener("abort", onAbort);
      Promise.resolve(result).then(
        (response) => {
          signal.removeEventListener("abort", onAbort);
          resolve(response);
        },
        (err: unknown) => {
          signal.removeEventListener("abort", onAbort);
          reject(err instanceof Error ? err : new Error(String(err)));
        },
      );
    });
  };
}

export interface Deferred<T> {
  promise: Promise<T>;
  resolve: (value: T) => void;
  reject: (err: unknown) => void;
}

export function deferred<T>(): Deferred<T> {
  let resolve!: (value: T) => void;
  let reject!: (err: unknown) => void;
  const promise = new Promise<T>((res, rej) => {
    resolve = res;
    reject = rej;
  });
  return { promise, resolve, reject };
}

export async function waitFor(condition: () => boolean, timeoutMs = 5000): Promise<void> {
  const start = Date.now();
  while (!condition()) {
    if (Date.now() - start > timeoutMs) {
      throw new Error("timed out waiting for condition");
    }
    await new Promise((resolve) => setTimeout(resolve, 10));
  }
}

export function mountApp(fetchImpl: FetchLike): { app: App; root: HTMLElement } {
  document.body.innerHTML = "";
  const root = document.createElement("div");
  root.id = "app";
  document.body.append(root);
  const app = new App(root, new ApiClient("", fetchImpl), null);
  return { app, root };
}

export function q<T extends Element>(root: ParentNode, selector: string): T {
  const node = root.querySelector<T>(selector);
  if (!node) {
    throw new Error(`selector not found: ${selector}`);
  }
  return node;
}

export function qa<T extends Element>(root: ParentNode, selector: string): T[] {
  return [...root.querySelectorAll<T>(selector)];
}

// ---- canned API payloads -------------------------------------------------

export const CLASSES = ["class_0", "class_1", "class_2"];

export function fakeContributions(nConcepts: number): number[][] {
  // Row 0 has strictly decreasing magnitude with alternating sign so the
  // expected display order is concept 0, 1, 2, ...
  const row0 = Array.from({ length: nConcepts }, (_, j) => {
    const magnitude = (nConcepts - j) / nConcepts;
    return j % 2 === 1 ? -magnitude : magnitude;
  });
  const row1 = Array.from({ length: nConcepts }, (_, j) => 0.01 * j);
  const row2 = Array.from({ length: nConcepts }, () => -0.05);
  return [row0, row1, row2];
}

export function fakePrediction(overrides: Partial<Prediction> = {}): Prediction {
  const nConcepts = 20;
  return {
    case_id: "case_0000",
    predicted_class: "class_0",
    classes: [...CLASSES],
    concepts: Array.from({ length: nConcepts }, (_, j) => `concept_${String(j).padStart(2, "0")}`),
    logits: [2.5, 0.5, -1.0],
    log_probs: [-0.2, -2.2, -3.7],
    concept_values: Array.from({ length: nConcepts }, (_, j) => j / nConcepts),
    contributions: fakeContributions(nConcepts),
    edits: [],
    ...overrides,
  };
}

export function fakeCaseDetail(overrides: Partial<CaseDetail> = {}): CaseDetail {
  const prediction = fakePrediction();
  return {
    case_id: "case_0000",
    label: "class_0",
    split: "test",
    has_oracle: true,
    concepts: prediction.concepts,
    concept_values: prediction.concept_values,
    ...overrides,
  };
}

export function fakeCasesList(): CasesList {
  return {
    cases: [
      { case_id: "case_0000", label: "class_0", split: "test", has_oracle: true },
      { case_id: "case_0001", label: "class_1", split: "test", has_oracle: true },
      { case_id: "case_0002", label: "class_2", split: "train", has_oracle: true },
    ],
  };
}

export function fakeModelInfo(): ModelInfo {
  return {
    classes: [...CLASSES],
    concepts: fakePrediction().concepts,
    weights: { shape: [3, 20], min: -1.2, max: 1.4, frobenius_norm: 3.3 },
    bias: [0.1, -0.1, 0.0],
    deterministic_mode: true,
  };
}

export function fakeReport(cls: string, edits: { index: number; value: number }[] = []): ReportResponse {
  const text = [
    "CASE: case_0000",
    `PREDICTED CLASS: ${cls}`,
    "",
    "FINDINGS:",
    `Lung fields show the characteristic appearance described for ${cls}.`,
    "",
    "CONCEPT ANALYSIS:",
    "The highest-influence concepts align with the retrieved references.",
    "",
    "IMPRESSION:",
    `Findings are most consistent with ${cls}.`,
    "",
    "EVIDENCE:",
    `[doc_${cls}:0000] Reference note on typical appearance for ${cls}.`,
  ].join("\n");
  return {
    case_id: "case_0000",
    predicted_class: cls,
    text,
    sections: {
      findings: `Lung fields show the characteristic appearance described for ${cls}.`,
      concept_analysis: "The highest-influence concepts align with the retrieved references.",
      impression: `Findings are most consistent with ${cls}.`,
      evidence: [
        { chunk_id: `doc_${cls}:0000`, text: `Reference note on typical appearance for ${cls}.` },
      ],
    },
    influence: {
      lambda: 0.5,
      entries: [
        {
          concept_name: "concept_00",
          contribution: 0.9,
          normalized_contribution: 1.0,
          evidence_support: 0.4,
          influence: 0.7,
          supporting_chunk_ids: [`doc_${cls}:0000`],
        },
      ],
    },
    trace: [
      { agent: "retriever", kind: "thought", payload: "gather reference excerpts" },
      { agent: "retriever", kind: "action", payload: 'search("typical radiographic appearance")' },
      { agent: "retriever", kind: "observation", payload: "1 hits" },
      { agent: "radiologist", kind: "output", payload: "concept summary" },
      { agent: "writer", kind: "action", payload: "generate_report" },
      { agent: "writer", kind: "observation", payload: "raw reply" },
      { agent: "writer", kind: "output", payload: text },
    ],
    edits,
  };
}

export function fakeClustering(): ClusteringResponse {
  return {
    metrics: {
      silhouette: 0.742,
      davies_bouldin: 1.234,
      calinski_harabasz: 56.789,
      dunn: 0.321,
    },
    n_points: 4,
    labels: ["a", "a", "b", "b"],
    projection: [
      [0.0, 0.1],
      [0.2, 0.0],
      [5.0, 5.1],
      [5.2, 4.9],
    ],
  };
}

/** Backend wired with the canned happy-path routes; tests override as needed. */
export function happyBackend(): FakeBackend {
  const backend = new FakeBackend();
  backend
    .on(/\/api\/cases\/[^/]+$/, () => jsonResponse(fakeCaseDetail()))
    .on(/\/api\/cases$/, () => jsonResponse(fakeCasesList()))
    .on(/\/api\/model$/, () => jsonResponse(fakeModelInfo()))
    .on(/\/api\/classify$/, () => jsonResponse(fakePrediction()))
    .on(/\/api\/intervene$/, (request) => {
      const body = request.body as { edits: { index: number; value: number }[] };
      return jsonResponse(fakePrediction({ predicted_class: "class_1", edits: body.edits }));
    })
    .on(/\/api\/report$/, (request) => {
      const body = request.body as { edits: { index: number; value: number }[] };
      const cls = body.edits.length > 0 ? "class_1" : "class_0";
      return jsonResponse(fakeReport(cls, body.edits));
    })
    .on(/\/api\/eval\/clustering$/, () => jsonResponse(fakeClustering()));
  return backend;
}
