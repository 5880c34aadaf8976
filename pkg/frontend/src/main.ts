import { ReviewApi } from "./api.js";
import { bindKeyboard } from "./keyboard.js";
import { bindEvents, renderApp } from "./render.js";
import { ReviewStore } from "./store.js";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");

const store = new ReviewStore(new ReviewApi());
store.subscribe((state) => renderApp(root, state));
bindEvents(root, store);
bindKeyboard(root, store);

void (async () => {
  await store.loadQueue();
  await store.refreshStats();
  await store.openSelected();
})();
