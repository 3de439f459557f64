import { describe, expect, it } from "vitest";
import {
  errorResponse,
  FakeBackend,
  fakeClustering,
  happyBackend,
  mountApp,
  q,
  qa,
  waitFor,
} from "../helpers";

describe("evaluation dashboard", () => {
  it("renders the four indices to three decimals and one point per projection pair", async () => {
    const { app, root } = mountApp(happyBackend().fetch);
    await app.navigate("#/eval");

    const values = qa<HTMLElement>(root, ".metric-value").map((node) => node.textContent);
    expect(values).toEqual(["0.742", "1.234", "56.789", "0.321"]);
    expect(qa(root, ".scatter-point")).toHaveLength(fakeClustering().n_points);
    expect(qa(root, ".legend-entry")).toHaveLength(2);
    expect(q(root, ".points-count").textContent).toBe("points: 4");
  });

  it("re-requests with on_projection when the toggle changes", async () => {
    const backend = happyBackend();
    const { app, root } = mountApp(backend.fetch);
    await app.navigate("#/eval");

    const toggle = q<HTMLInputElement>(root, ".eval-on-projection");
    toggle.checked = true;
    toggle.dispatchEvent(new Event("change", { bubbles: true }));
    await waitFor(() => backend.requestsTo(/\/api\/eval\/clustering$/).length === 2);

    const bodies = backend
      .requestsTo(/\/api\/eval\/clustering$/)
      .map((request) => request.body as { on_projection: boolean; use_dataset: boolean });
    expect(bodies[0]).toEqual({ use_dataset: true, split: "test", on_projection: false });
    expect(bodies[1]).toEqual({ use_dataset: true, split: "test", on_projection: true });
  });

  it("surfaces degenerate-input errors from the service verbatim", async () => {
    const backend = new FakeBackend().on(/\/api\/eval\/clustering$/, () =>
      errorResponse(422, {
        error_code: "ZeroWithinDispersion",
        stage: null,
        message: "every cluster is a single point; within-cluster dispersion is zero",
      }),
    );
    const { app, root } = mountApp(backend.fetch);
    await app.navigate("#/eval");

    expect(q(root, ".banner-code").textContent).toBe("ZeroWithinDispersion");
    expect(q(root, ".banner-message").textContent).toContain("within-cluster dispersion is zero");
  });
});
