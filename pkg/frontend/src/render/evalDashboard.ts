import type { Actions } from "../actions";
import { fmt3, fmtExact } from "../format";
import type { EvalState } from "../store";
import { el, placeholder, svgEl } from "./dom";

const PALETTE = ["#4363d8", "#e6194b", "#3cb44b", "#f58231", "#911eb4", "#46f0f0", "#808000"];

function colorFor(label: string, order: string[]): string {
  const index = order.indexOf(label);
  return PALETTE[index % PALETTE.length]!;
}

function renderScatter(projection: [number, number][], labels: string[]): SVGElement {
  const width = 520;
  const height = 380;
  const pad = 24;
  const xs = projection.map((point) => point[0]);
  const ys = projection.map((point) => point[1]);
  const xMin = Math.min(...xs);
  const xMax = Math.max(...xs);
  const yMin = Math.min(...ys);
  const yMax = Math.max(...ys);
  const xSpan = xMax - xMin || 1;
  const ySpan = yMax - yMin || 1;
  const order = [...new Set(labels)];
  const svg = svgEl("svg", {
    class: "scatter",
    viewBox: `0 0 ${width} ${height}`,
    role: "img",
    "aria-label": "2-D projection of labeled points",
  });
  projection.forEach((point, index) => {
    const label = labels[index] ?? "";
    const cx = pad + ((point[0] - xMin) / xSpan) * (width - 2 * pad);
    const cy = height - pad - ((point[1] - yMin) / ySpan) * (height - 2 * pad);
    svg.append(
      svgEl("circle", {
        class: "scatter-point",
        cx: cx.toFixed(1),
        cy: cy.toFixed(1),
        r: "5",
        fill: colorFor(label, order),
        "data-label": label,
      }),
    );
  });
  return svg;
}

export function renderEvalDashboard(evalView: EvalState | null, actions: Actions): HTMLElement {
  const root = el("div", { class: "eval-dashboard" }, el("h2", {}, "Clustering evaluation"));

  const controls = el("div", { class: "eval-controls" });
  const split = evalView?.split ?? "test";
  const onProjection = evalView?.onProjection ?? false;
  const splitSelect = el("select", { class: "eval-split" });
  for (const option of ["train", "test"] as const) {
    const node = el("option", { value: option }, option);
    if (option === split) {
      node.setAttribute("selected", "selected");
    }
    splitSelect.append(node);
  }
  splitSelect.addEventListener("change", () =>
    actions.runEval(splitSelect.value as "train" | "test", onProjection),
  );
  const projToggle = el("input", { class: "eval-on-projection", type: "checkbox" });
  projToggle.checked = onProjection;
  projToggle.addEventListener("change", () => actions.runEval(split, projToggle.checked));
  controls.append(
    el("label", {}, "split ", splitSelect),
    el("label", {}, projToggle, " compute indices on the 2-D projection"),
  );
  root.append(controls);

  if (!evalView || !evalView.result) {
    root.append(placeholder("Computing indices…"));
    return root;
  }
  const result = evalView.result;
  const rows: [string, number][] = [
    ["Silhouette", result.metrics.silhouette],
    ["Davies-Bouldin", result.metrics.davies_bouldin],
    ["Calinski-Harabasz", result.metrics.calinski_harabasz],
    ["Dunn", result.metrics.dunn],
  ];
  const table = el(
    "table",
    { class: "metrics-table" },
    el("thead", {}, el("tr", {}, el("th", {}, "Index"), el("th", {}, "Value"))),
  );
  const body = el("tbody", {});
  for (const [name, value] of rows) {
    body.append(
      el(
        "tr",
        { "data-metric": name },
        el("td", {}, name),
        el("td", { class: "numeric metric-value" }, fmt3(value)),
      ),
    );
  }
  table.append(body);
  root.append(
    el(
      "section",
      { class: "panel" },
      table,
      el("div", { class: "points-count" }, "points: ", el("span", { class: "numeric" }, fmtExact(result.n_points))),
    ),
  );

  if (result.projection) {
    const order = [...new Set(result.labels)];
    const legend = el(
      "div",
      { class: "legend" },
      ...order.map((label) =>
        el(
          "span",
          { class: "legend-entry" },
          el("span", { class: "swatch", style: `background:${colorFor(label, order)}` }),
          label,
        ),
      ),
    );
    root.append(
      el(
        "section",
        { class: "panel" },
        renderScatter(result.projection, result.labels),
        legend,
      ),
    );
  }
  return root;
}
