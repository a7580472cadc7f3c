import { ApiClient } from "./api.js";
import { SessionController } from "./controller.js";
import type { SessionState } from "./state.js";
import { mount } from "./view.js";

const api = new ApiClient("");
const renderHolder: { fn: (state: SessionState) => void } = { fn: () => {} };
const controller = new SessionController(api, (state) => renderHolder.fn(state), window.localStorage);
const root = document.getElementById("app");
if (!root) {
  throw new Error("missing #app mount point");
}
renderHolder.fn = mount(root, controller, api);
void controller.start();
