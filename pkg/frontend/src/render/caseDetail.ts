import type { Actions } from "../actions";
import { fmt3, fmtExact } from "../format";
import type { CaseViewState } from "../store";
import type { Edit, Prediction } from "../types";
import { el, placeholder } from "./dom";

/** Concept indices ordered by descending |contribution| toward the predicted
 * class; the ordering is presentation only — every displayed number is a
 * server value. */
export function contributionOrder(prediction: Prediction): number[] {
  const row = predictedRow(prediction);
  return row
    .map((value, index) => index)
    .sort((a, b) => Math.abs(row[b]!) - Math.abs(row[a]!) || a - b);
}

function predictedRow(prediction: Prediction): number[] {
  const classIndex = prediction.classes.indexOf(prediction.predicted_class);
  return prediction.contributions[classIndex] ?? [];
}

function renderPredictionPanel(view: CaseViewState): HTMLElement {
  const baseline = view.baseline!;
  const current = view.current!;
  const changed = current.predicted_class !== baseline.predicted_class;
  const headline = el("div", { class: "predicted-now", "data-predicted": current.predicted_class });
  if (changed) {
    headline.append(
      el("span", { class: "old-class" }, baseline.predicted_class),
      el("span", { class: "arrow" }, " → "),
    );
  }
  headline.append(el("span", { class: "new-class" }, current.predicted_class));

  const table = el(
    "table",
    { class: "class-table" },
    el("thead", {}, el("tr", {}, el("th", {}, "Class"), el("th", {}, "Logit"))),
  );
  const body = el("tbody", {});
  current.classes.forEach((cls, index) => {
    body.append(
      el(
        "tr",
        {
          class: cls === current.predicted_class ? "class-row predicted" : "class-row",
          "data-class": cls,
        },
        el("td", {}, cls),
        el("td", { class: "numeric" }, fmt3(current.logits[index]!)),
      ),
    );
  });
  table.append(body);
  return el("section", { class: "panel prediction-panel" }, el("h2", {}, "Prediction"), headline, table);
}

function editFor(edits: Edit[], index: number): Edit | undefined {
  return edits.find((edit) => edit.index === index);
}

function renderConceptRow(
  view: CaseViewState,
  index: number,
  contribution: number,
  maxAbs: number,
  actions: Actions,
): HTMLElement {
  const current = view.current!;
  const name = current.concepts[index]!;
  const pending = view.pendingEdits.get(index);
  const applied = editFor(current.edits, index);
  const inputValue = pending ?? fmtExact(current.concept_values[index]!);

  const classes = ["concept-row"];
  if (view.erroredConcepts.has(index)) {
    classes.push("error");
  }

  const bar = el("div", { class: contribution < 0 ? "bar negative" : "bar positive" });
  bar.style.width = `${((Math.abs(contribution) / maxAbs) * 100).toFixed(1)}%`;

  const slider = el("input", {
    class: "concept-slider",
    type: "range",
    min: "0",
    max: "1",
    step: "0.001",
  });
  slider.value = inputValue;
  slider.addEventListener("input", () => actions.setPendingEdit(index, slider.value));

  const number = el("input", { class: "concept-number", type: "number", step: "0.001" });
  number.value = inputValue;
  number.addEventListener("change", () => actions.setPendingEdit(index, number.value));

  return el(
    "div",
    {
      class: classes.join(" "),
      "data-concept-index": String(index),
      "data-concept-name": name,
    },
    el("span", { class: "concept-name" }, name),
    el("span", { class: "contribution-value numeric" }, fmt3(contribution)),
    el("div", { class: "bar-track" }, bar),
    el("span", { class: "concept-value numeric" }, fmt3(current.concept_values[index]!)),
    slider,
    number,
    pending !== undefined ? el("span", { class: "pending-chip" }, pending) : null,
    applied ? el("span", { class: "applied-chip" }, fmtExact(applied.value)) : null,
  );
}

export function renderCaseDetail(view: CaseViewState | null, actions: Actions): HTMLElement {
  const root = el("div", { class: "case-detail" });
  if (!view || !view.detail || !view.baseline || !view.current) {
    root.append(placeholder("Loading case…"));
    return root;
  }
  const detail = view.detail;
  root.append(
    el(
      "header",
      { class: "case-header" },
      el("h2", {}, detail.case_id),
      detail.label !== null ? el("span", { class: "chip" }, detail.label) : null,
      el("span", { class: "chip" }, detail.split),
    ),
    renderPredictionPanel(view),
  );

  const current = view.current;
  const row = predictedRow(current);
  const order = contributionOrder(current);
  const maxAbs = order.length > 0 ? Math.max(Math.abs(row[order[0]!]!), 1e-12) : 1;
  const concepts = el(
    "section",
    { class: "panel concepts-panel" },
    el("h2", {}, "Concept contributions"),
    el(
      "div",
      { class: "concept-row concept-head" },
      el("span", { class: "concept-name" }, "concept"),
      el("span", { class: "contribution-value" }, "contribution"),
      el("div", { class: "bar-track" }),
      el("span", { class: "concept-value" }, "value"),
      el("span", {}, "what-if"),
    ),
  );
  for (const index of order) {
    concepts.append(renderConceptRow(view, index, row[index]!, maxAbs, actions));
  }
  root.append(concepts);

  const apply = el("button", { class: "apply-button", type: "button" }, "Apply interventions");
  apply.addEventListener("click", () => actions.applyEdits());
  const reset = el("button", { class: "reset-button", type: "button" }, "Reset to baseline");
  reset.addEventListener("click", () => actions.resetBaseline());
  const compare = el(
    "a",
    { class: "compare-link", href: `#/compare/${encodeURIComponent(view.caseId)}` },
    "Compare reports",
  );
  compare.addEventListener("click", (event) => {
    event.preventDefault();
    actions.navigate(`#/compare/${encodeURIComponent(view.caseId)}`);
  });
  const loadReport = el("button", { class: "load-report-button", type: "button" }, "Load report");
  loadReport.addEventListener("click", () => actions.loadBaselineReport());
  root.append(el("div", { class: "case-actions" }, apply, reset, compare, loadReport));

  if (view.baselineReport) {
    root.append(
      el(
        "section",
        { class: "panel report-panel" },
        el("h2", {}, "Report"),
        el("pre", { class: "report-text" }, view.baselineReport.text),
      ),
    );
  }
  return root;
}
