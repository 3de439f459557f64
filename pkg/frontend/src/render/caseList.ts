import type { Actions } from "../actions";
import type { AppState } from "../store";
import { el, placeholder } from "./dom";

export function renderCaseList(state: AppState, actions: Actions): HTMLElement {
  const section = el("section", { class: "panel case-list" }, el("h2", {}, "Cases"));
  if (state.model) {
    const chips = el(
      "div",
      { class: "model-chips" },
      ...state.model.classes.map((cls) => el("span", { class: "chip" }, cls)),
      state.model.deterministic_mode ? el("span", { class: "chip chip-deterministic" }, "deterministic") : null,
    );
    section.append(chips);
  }
  if (!state.cases) {
    section.append(placeholder("Loading cases…"));
    return section;
  }
  const table = el(
    "table",
    { class: "cases-table" },
    el(
      "thead",
      {},
      el("tr", {}, el("th", {}, "Case"), el("th", {}, "Label"), el("th", {}, "Split")),
    ),
  );
  const body = el("tbody", {});
  for (const summary of state.cases) {
    const link = el("a", { href: `#/case/${encodeURIComponent(summary.case_id)}` }, summary.case_id);
    link.addEventListener("click", (event) => {
      event.preventDefault();
      actions.navigate(`#/case/${encodeURIComponent(summary.case_id)}`);
    });
    body.append(
      el(
        "tr",
        { class: "case-row", "data-case-id": summary.case_id },
        el("td", {}, link),
        el("td", {}, summary.label ?? "—"),
        el("td", {}, summary.split),
      ),
    );
  }
  table.append(body);
  section.append(table);
  return section;
}
