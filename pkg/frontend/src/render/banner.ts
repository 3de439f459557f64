import type { Actions } from "../actions";
import type { BannerState } from "../store";
import { el } from "./dom";

/** Dismissible banner surfacing structured service errors verbatim. */
export function renderBanner(banner: BannerState, actions: Actions): HTMLElement {
  const node = el("div", {
    class: banner.kind === "connection" ? "banner banner-connection" : "banner banner-error",
    role: "alert",
  });
  if (banner.error) {
    node.append(
      el("span", { class: "banner-code" }, banner.error.error_code),
      banner.error.stage ? el("span", { class: "banner-stage" }, banner.error.stage) : "",
      el("span", { class: "banner-message" }, banner.error.message),
    );
  } else {
    node.append(el("span", { class: "banner-message" }, banner.message));
  }
  if (banner.retry) {
    const retry = el("button", { class: "banner-retry", type: "button" }, "Retry");
    retry.addEventListener("click", () => actions.retryBanner());
    node.append(retry);
  }
  const dismiss = el(
    "button",
    { class: "banner-dismiss", type: "button", "aria-label": "Dismiss" },
    "×",
  );
  dismiss.addEventListener("click", () => actions.dismissBanner());
  node.append(dismiss);
  return node;
}
