/** Boots the built bundle (dist/main.js) — the artifact index.html loads —
 * against a live service, exercising the real bootstrap path: `?api=` parsing,
 * mounting on #app, and initial navigation. Run `npm run build` first.
 */

import { spawn, spawnSync, type ChildProcessWithoutNullStreams } from "node:child_process";
import { existsSync, mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import path from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, expect, it } from "vitest";
import { waitFor } from "../helpers";

const here = path.dirname(fileURLToPath(import.meta.url));
const bundlePath = path.resolve(here, "../../dist/main.js");
const fixtureScript = path.resolve(here, "../../../tests/fixture_env.py");
const port = 9000 + (process.pid % 61);

let workDir: string;
let server: ChildProcessWithoutNullStreams;

beforeAll(async () => {
  if (!existsSync(bundlePath)) {
    throw new Error("dist/main.js not found — run `npm run build` before the bundle test");
  }
  workDir = mkdtempSync(path.join(tmpdir(), "workbench-bundle-"));
  const generate = spawnSync("python3", [fixtureScript, workDir, "identity", String(port)], {
    encoding: "utf-8",
  });
  if (generate.status !== 0) {
    throw new Error(`fixture generation failed:\n${generate.stderr}`);
  }
  server = spawn("cxreport", [
    "serve",
    "--config",
    path.join(workDir, "config.json"),
    "--host",
    "127.0.0.1",
    "--port",
    String(port),
  ]);
  const deadline = Date.now() + 30_000;
  for (;;) {
    try {
      const response = await fetch(`http://127.0.0.1:${port}/api/cases`);
      if (response.ok) {
        break;
      }
    } catch {
      /* not up yet */
    }
    if (Date.now() > deadline) {
      throw new Error("service did not come up");
    }
    await new Promise((resolve) => setTimeout(resolve, 200));
  }
});

afterAll(async () => {
  server?.kill("SIGTERM");
  await new Promise((resolve) => setTimeout(resolve, 300));
  rmSync(workDir, { recursive: true, force: true });
});

it("the built bundle boots, reads ?api=, and renders live cases", async () => {
  window.history.replaceState(null, "", `/?api=http://127.0.0.1:${port}`);
  document.body.innerHTML = '<div id="app"></div>';

  await import(bundlePath);

  const root = document.getElementById("app")!;
  await waitFor(() => root.querySelectorAll(".case-row").length === 3);
  expect(root.querySelector("h1")?.textContent).toBe("Intervention Workbench");
  const ids = [...root.querySelectorAll<HTMLElement>(".case-row")].map(
    (row) => row.dataset.caseId,
  );
  expect(ids).toEqual(["case_0000", "case_0001", "case_0002"]);
  expect(root.querySelector(".chip-deterministic")).not.toBeNull();
});
