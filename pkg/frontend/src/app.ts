import type { Actions } from "./actions";
import type { ApiClient } from "./api";
import { renderBanner } from "./render/banner";
import { renderCaseDetail } from "./render/caseDetail";
import { renderCaseList } from "./render/caseList";
import { el } from "./render/dom";
import { renderEvalDashboard } from "./render/evalDashboard";
import { renderReportCompare } from "./render/reportCompare";
import { parseRoute, WorkbenchStore } from "./store";

/** Wires the store to the DOM: one full re-render per state change. */
export class App {
  readonly store: WorkbenchStore;
  private readonly actions: Actions;

  constructor(
    private readonly root: HTMLElement,
    api: ApiClient,
    private readonly windowRef: Window | null = typeof window === "undefined" ? null : window,
  ) {
    this.store = new WorkbenchStore(api, () => this.render());
    this.actions = {
      navigate: (hash) => {
        this.setHash(hash);
        void this.navigate(hash);
      },
      dismissBanner: () => this.store.dismissBanner(),
      retryBanner: () => this.store.retryBanner(),
      setPendingEdit: (index, raw) => this.store.setPendingEdit(index, raw),
      applyEdits: () => void this.store.applyEdits(),
      resetBaseline: () => this.store.resetBaseline(),
      loadBaselineReport: () => void this.store.loadBaselineReport(),
      runEval: (split, onProjection) => void this.store.runEval(split, onProjection),
    };
    this.windowRef?.addEventListener("hashchange", () => {
      void this.navigate(this.windowRef?.location.hash ?? "#/");
    });
    this.render();
  }

  private setHash(hash: string): void {
    // URL state is best-effort: some DOM environments do not implement
    // fragment navigation, and the store does not depend on it.
    try {
      if (this.windowRef && this.windowRef.location.hash !== hash) {
        this.windowRef.location.hash = hash;
      }
    } catch {
      /* ignore */
    }
  }

  navigate(hash: string): Promise<void> {
    return this.store.navigate(parseRoute(hash));
  }

  private link(label: string, hash: string, cls: string): HTMLElement {
    const anchor = el("a", { class: cls, href: hash }, label);
    anchor.addEventListener("click", (event) => {
      event.preventDefault();
      this.actions.navigate(hash);
    });
    return anchor;
  }

  render(): void {
    const state = this.store.state;
    const header = el(
      "header",
      { class: "app-header" },
      el("h1", {}, "Intervention Workbench"),
      el(
        "nav",
        {},
        this.link("Cases", "#/", "nav-cases"),
        this.link("Evaluation", "#/eval", "nav-eval"),
      ),
    );
    let view: HTMLElement;
    switch (state.route.kind) {
      case "cases":
        view = renderCaseList(state, this.actions);
        break;
      case "case":
        view = renderCaseDetail(state.caseView, this.actions);
        break;
      case "compare":
        view = renderReportCompare(state.caseView, this.actions);
        break;
      case "eval":
        view = renderEvalDashboard(state.evalView, this.actions);
        break;
    }
    const children: Node[] = [header];
    if (state.banner) {
      children.push(renderBanner(state.banner, this.actions));
    }
    children.push(el("main", { class: "app-main" }, view));
    this.root.replaceChildren(...children);
  }
}
