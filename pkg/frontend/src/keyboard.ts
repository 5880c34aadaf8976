/** High-throughput review shortcuts: a/r/e decide, j/k navigate the queue. */

import type { ReviewStore } from "./store.js";

export function handleKey(store: ReviewStore, key: string, editValue: () => string): boolean {
  switch (key) {
    case "j":
      store.moveSelection(1);
      void store.openSelected();
      return true;
    case "k":
      store.moveSelection(-1);
      void store.openSelected();
      return true;
    case "a":
      void store.decide("accept");
      return true;
    case "r":
      void store.decide("reject");
      return true;
    case "e":
      void store.decide("edit", editValue());
      return true;
    default:
      return false;
  }
}

export function bindKeyboard(root: HTMLElement, store: ReviewStore): void {
  document.addEventListener("keydown", (event) => {
    const target = event.target as HTMLElement | null;
    if (target && target.tagName === "INPUT") return; // don't steal typing
    const input = root.querySelector<HTMLInputElement>("#edit-code");
    if (handleKey(store, event.key, () => input?.value ?? "")) {
      event.preventDefault();
    }
  });
}
