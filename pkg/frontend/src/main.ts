// Entry point: mounts the console against the serving origin. Built assets
// are static and can be served by any file server or the dose service host.

import { DoseApi } from "./api.js";
import { Console } from "./app.js";

const api = new DoseApi((path, init) => fetch(path, init));
const root = document.getElementById("app");
if (!root) {
  throw new Error("missing #app mount point");
}
const console_ = new Console(api, root);
const liveToggle = document.getElementById("live-sweep") as HTMLInputElement | null;
if (liveToggle) {
  liveToggle.addEventListener("change", () => {
    console_.liveSweep = liveToggle.checked;
  });
  console_.form.onChange(() => console_.scheduleLiveSubmit());
}
void console_.init();
