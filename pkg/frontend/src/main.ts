import { ApiClient } from "./api";
import { App } from "./app";

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("api") ?? "";
const root = document.getElementById("app");
if (!root) {
  throw new Error("missing #app mount point");
}
const app = new App(root, new ApiClient(baseUrl));
void app.navigate(window.location.hash || "#/");
