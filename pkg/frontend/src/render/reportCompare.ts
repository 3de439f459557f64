import type { Actions } from "../actions";
import { diffReports, type DiffSegment } from "../diff";
import { fmt3 } from "../format";
import type { CaseViewState } from "../store";
import type { ReportResponse } from "../types";
import { el, placeholder } from "./dom";

function renderSentences(segments: DiffSegment[], side: "before" | "after"): HTMLElement {
  const container = el("div", { class: "report-sentences" });
  for (const segment of segments) {
    if (side === "before" && segment.kind === "added") {
      continue;
    }
    if (side === "after" && segment.kind === "removed") {
      continue;
    }
    const cls =
      segment.kind === "common"
        ? "sentence"
        : segment.kind === "removed"
          ? "sentence diff-removed"
          : "sentence diff-added";
    container.append(el("div", { class: cls }, segment.text));
  }
  return container;
}

function renderInfluence(report: ReportResponse): HTMLElement {
  const table = el(
    "table",
    { class: "influence-table" },
    el(
      "thead",
      {},
      el(
        "tr",
        {},
        el("th", {}, "Concept"),
        el("th", {}, "Contribution"),
        el("th", {}, "Evidence support"),
        el("th", {}, "Influence"),
      ),
    ),
  );
  const body = el("tbody", {});
  for (const entry of report.influence.entries) {
    body.append(
      el(
        "tr",
        {},
        el("td", {}, entry.concept_name),
        el("td", { class: "numeric" }, fmt3(entry.contribution)),
        el("td", { class: "numeric" }, fmt3(entry.evidence_support)),
        el("td", { class: "numeric" }, fmt3(entry.influence)),
      ),
    );
  }
  table.append(body);
  return el("details", { class: "influence" }, el("summary", {}, "Influence"), table);
}

function renderTrace(report: ReportResponse): HTMLElement {
  const list = el("ol", { class: "trace-steps" });
  for (const step of report.trace) {
    list.append(
      el(
        "li",
        { class: `trace-step trace-${step.agent}` },
        el("span", { class: "trace-agent" }, step.agent),
        el("span", { class: "trace-kind" }, step.kind),
        el("pre", { class: "trace-payload" }, step.payload),
      ),
    );
  }
  return el("details", { class: "trace" }, el("summary", {}, "Agent trace"), list);
}

function renderColumn(
  title: string,
  report: ReportResponse,
  segments: DiffSegment[] | null,
  side: "before" | "after",
): HTMLElement {
  const column = el(
    "section",
    { class: `panel report-column report-${side}` },
    el("h2", {}, title),
    el("div", { class: "column-class", "data-predicted": report.predicted_class }, report.predicted_class),
    segments
      ? renderSentences(segments, side)
      : el(
          "div",
          { class: "report-sentences" },
          ...report.text
            .split("\n")
            .filter((line) => line.trim() !== "")
            .map((line) => el("div", { class: "sentence" }, line.trim())),
        ),
    renderInfluence(report),
    renderTrace(report),
  );
  return column;
}

export function renderReportCompare(view: CaseViewState | null, actions: Actions): HTMLElement {
  const root = el("div", { class: "report-compare" });
  if (!view || !view.detail) {
    root.append(placeholder("Loading case…"));
    return root;
  }

  const back = el(
    "a",
    { class: "back-link", href: `#/case/${encodeURIComponent(view.caseId)}` },
    "Back to case",
  );
  back.addEventListener("click", (event) => {
    event.preventDefault();
    actions.navigate(`#/case/${encodeURIComponent(view.caseId)}`);
  });
  const reset = el("button", { class: "reset-button", type: "button" }, "Reset to baseline");
  reset.addEventListener("click", () => actions.resetBaseline());
  root.append(el("header", { class: "compare-header" }, el("h2", {}, view.caseId), back, reset));

  if (view.pendingEdits.size === 0) {
    root.append(
      el(
        "div",
        { class: "no-changes" },
        "No interventions applied — the baseline report is the current report.",
      ),
    );
    if (view.baselineReport) {
      root.append(
        el(
          "div",
          { class: "columns" },
          renderColumn("Baseline report", view.baselineReport, null, "before"),
        ),
      );
    }
    return root;
  }

  if (!view.baselineReport || !view.intervenedReport) {
    root.append(placeholder("Composing reports…"));
    return root;
  }

  const segments = diffReports(view.baselineReport.text, view.intervenedReport.text);
  root.append(
    el(
      "div",
      { class: "columns" },
      renderColumn("Baseline report", view.baselineReport, segments, "before"),
      renderColumn("Intervened report", view.intervenedReport, segments, "after"),
    ),
  );
  return root;
}
