// @vitest-environment happy-dom
import { beforeEach, describe, expect, it } from "vitest";

import { ReviewApi } from "../src/api.js";
import { handleKey } from "../src/keyboard.js";
import { bindEvents, renderApp } from "../src/render.js";
import { ReviewStore } from "../src/store.js";
import { MockReviewService } from "./mockService.js";

let service: MockReviewService;
let store: ReviewStore;
let root: HTMLElement;

async function flush(): Promise<void> {
  await new Promise((resolve) => setTimeout(resolve, 0));
}

beforeEach(async () => {
  service = new MockReviewService();
  store = new ReviewStore(new ReviewApi(service.fetch), "dr_dom");
  document.body.innerHTML = '<div id="app"></div>';
  root = document.getElementById("app")!;
  store.subscribe((state) => renderApp(root, state));
  bindEvents(root, store);
  await store.loadQueue();
  await store.refreshStats();
});

describe("queue screen", () => {
  it("renders the pending rows with category and verdict chips", () => {
    const rows = root.querySelectorAll(".flag-row");
    expect(rows).toHaveLength(5);
    expect(root.querySelector("#queue-count")?.textContent).toContain("5 flags");
    expect(root.querySelectorAll(".chip-fp").length).toBeGreaterThan(0);
    expect(root.querySelectorAll(".chip-no").length).toBeGreaterThan(0); // verifier chip
  });

  it("clicking a row opens its detail with highlighted context", async () => {
    const row = root.querySelector<HTMLElement>('[data-flag-id="f-alpha"]')!;
    row.click();
    await flush();
    const detail = root.querySelector(".detail");
    expect(detail?.getAttribute("data-flag-id")).toBe("f-alpha");
    const marks = root.querySelectorAll(".context mark");
    expect(marks.length).toBe(2); // the fixture snippet repeats the mention
    expect(marks[0]?.textContent).toBe("alpha");
  });

  it("shows the review-complete state with an export link when the queue empties", async () => {
    for (const flag of [...service.flags]) {
      await store.openDetail(flag.flag_id);
      await store.decide(flag.category === "FP" ? "accept" : "reject");
    }
    await flush();
    expect(root.querySelector("#review-complete")).not.toBeNull();
    expect(root.querySelector("#review-complete a")?.getAttribute("href")).toBe("/api/export");
  });
});

describe("detail screen", () => {
  it("decision buttons post once and then render disabled", async () => {
    await store.openDetail("f-delta");
    await flush();
    (root.querySelector("#btn-accept") as HTMLButtonElement).click();
    await flush();
    const posts = service.requestLog.filter((line) =>
      line.includes("/api/flags/f-delta/decision"),
    );
    expect(posts).toHaveLength(1);
    // auto-advance opened another pending flag; revisit the decided one
    await store.openDetail("f-delta");
    await flush();
    expect((root.querySelector("#btn-accept") as HTMLButtonElement).disabled).toBe(true);
    expect(root.querySelector(".decided-note")?.textContent).toContain("accept");
  });

  it("clicking a candidate fills the edit code input", async () => {
    await store.openDetail("f-zeta");
    await flush();
    (root.querySelector(".candidate") as HTMLButtonElement).click();
    const input = root.querySelector<HTMLInputElement>("#edit-code")!;
    expect(input.value).toBe("ORPHA:6");
  });

  it("malformed edit code shows a validation banner and sends nothing", async () => {
    await store.openDetail("f-zeta");
    await flush();
    const input = root.querySelector<HTMLInputElement>("#edit-code")!;
    input.value = "not-a-code";
    const posts = service.requestLog.filter((line) => line.startsWith("POST")).length;
    (root.querySelector("#btn-edit") as HTMLButtonElement).click();
    await flush();
    expect(root.querySelector("#banner")?.textContent).toMatch(/invalid code/i);
    expect(service.requestLog.filter((line) => line.startsWith("POST")).length).toBe(posts);
  });
});

describe("stats panel", () => {
  it("refreshes after each decision", async () => {
    expect(root.querySelector("#badge-pending")?.textContent).toBe("5 pending");
    await store.openDetail("f-alpha");
    await store.decide("accept");
    await flush();
    expect(root.querySelector("#badge-pending")?.textContent).toBe("4 pending");
    expect(root.querySelector("#badge-decided")?.textContent).toBe("1 decided");
  });

  it("degrades to a stale badge when the stats fetch fails", async () => {
    service.unreachable = true;
    await store.refreshStats();
    await flush();
    expect(root.querySelector(".chip-stale")).not.toBeNull();
    expect(root.querySelector("#badge-pending")?.textContent).toBe("5 pending"); // stale values shown
  });
});

describe("keyboard shortcuts", () => {
  it("j/k move the selection and a decides", async () => {
    await store.openSelected();
    handleKey(store, "j", () => "");
    await flush();
    expect(store.getState().selectedIndex).toBe(1);
    handleKey(store, "k", () => "");
    await flush();
    expect(store.getState().selectedIndex).toBe(0);
    handleKey(store, "a", () => "");
    await flush();
    expect(store.getState().stats?.decided).toBe(1);
  });

  it("category filter select narrows the queue", async () => {
    const select = root.querySelector<HTMLSelectElement>("#category-filter")!;
    select.value = "FP";
    select.dispatchEvent(new Event("change", { bubbles: true }));
    await flush();
    expect(store.getState().flags.every((flag) => flag.category === "FP")).toBe(true);
  });
});
