/** Queue state and decision flow. All state of record lives on the service:
 * every mutation round-trips through the API and the local copy is refreshed
 * from the response, so a hard reload always reproduces the same screens.
 */

import { ConflictError, ReviewApi, ServiceUnreachableError } from "./api.js";
import { normalizeCode } from "./codes.js";
import type { DecisionKind, FlagCategory, FlagView, Stats } from "./types.js";

export interface StoreState {
  flags: FlagView[];
  total: number;
  page: number;
  pageSize: number;
  categoryFilter: FlagCategory | null;
  selectedIndex: number;
  detail: FlagView | null;
  stats: Stats | null;
  statsStale: boolean;
  banner: string | null;
  reviewComplete: boolean;
}

export type Listener = (state: StoreState) => void;

export class ReviewStore {
  private state: StoreState = {
    flags: [],
    total: 0,
    page: 1,
    pageSize: 50,
    categoryFilter: null,
    selectedIndex: 0,
    detail: null,
    stats: null,
    statsStale: false,
    banner: null,
    reviewComplete: false,
  };
  private listeners: Listener[] = [];
  private decisionInFlight = false;

  constructor(
    private readonly api: ReviewApi,
    private readonly reviewer: string = "reviewer",
  ) {}

  getState(): StoreState {
    return this.state;
  }

  subscribe(listener: Listener): void {
    this.listeners.push(listener);
  }

  private update(patch: Partial<StoreState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) listener(this.state);
  }

  async loadQueue(page = 1): Promise<void> {
    try {
      const result = await this.api.listFlags(
        "pending",
        page,
        this.state.pageSize,
        this.state.categoryFilter,
      );
      this.update({
        flags: result.items,
        total: result.total,
        page: result.page,
        selectedIndex: Math.min(
          this.state.selectedIndex,
          Math.max(result.items.length - 1, 0),
        ),
        banner: null,
        reviewComplete: result.total === 0,
      });
    } catch (error) {
      if (error instanceof ServiceUnreachableError) {
        this.update({ banner: "Service unreachable - retry" });
        return;
      }
      throw error;
    }
  }

  async refreshStats(): Promise<void> {
    try {
      const stats = await this.api.stats();
      this.update({ stats, statsStale: false });
    } catch {
      this.update({ statsStale: true });
    }
  }

  async setCategoryFilter(category: FlagCategory | null): Promise<void> {
    this.update({ categoryFilter: category, selectedIndex: 0 });
    await this.loadQueue(1);
  }

  moveSelection(delta: number): void {
    if (!this.state.flags.length) return;
    const next = Math.min(
      Math.max(this.state.selectedIndex + delta, 0),
      this.state.flags.length - 1,
    );
    this.update({ selectedIndex: next });
  }

  async openSelected(): Promise<void> {
    const flag = this.state.flags[this.state.selectedIndex];
    if (flag) await this.openDetail(flag.flag_id);
  }

  async openDetail(flagId: string): Promise<void> {
    const detail = await this.api.getFlag(flagId);
    this.update({ detail, banner: null });
  }

  closeDetail(): void {
    this.update({ detail: null });
  }

  /** Validate an edit code before any request leaves the browser. */
  validateEditCode(raw: string): string | null {
    return normalizeCode(raw);
  }

  /**
   * Record a decision for the open flag. Exactly one POST per click: while a
   * request is in flight or the flag is already decided, this is a no-op.
   * After the service acknowledges, the queue and stats are re-fetched and
   * the next pending flag is opened.
   */
  async decide(kind: DecisionKind, rawCode?: string): Promise<"ok" | "blocked" | "conflict" | "invalid-code"> {
    const flag = this.state.detail;
    if (!flag || flag.decision !== null || this.decisionInFlight) return "blocked";
    let code: string | null = null;
    if (kind === "edit") {
      code = this.validateEditCode(rawCode ?? "");
      if (code === null) {
        this.update({ banner: "Invalid code - expected HP:NNNNNNN or ORPHA:N" });
        return "invalid-code";
      }
    }
    this.decisionInFlight = true;
    try {
      const decided = await this.api.decide(flag.flag_id, kind, code, this.reviewer);
      this.update({ detail: decided });
    } catch (error) {
      if (error instanceof ConflictError) {
        // decided elsewhere: show the server's state, never overwrite it
        const fresh = await this.api.getFlag(flag.flag_id);
        this.update({ detail: fresh, banner: "Already decided elsewhere - refreshed" });
        return "conflict";
      }
      throw error;
    } finally {
      this.decisionInFlight = false;
    }
    await this.loadQueue(this.state.page);
    await this.refreshStats();
    await this.advanceToNextPending();
    return "ok";
  }

  private async advanceToNextPending(): Promise<void> {
    const next = this.state.flags[0];
    if (next) {
      await this.openDetail(next.flag_id);
      this.update({ selectedIndex: 0 });
    } else {
      this.update({ detail: null, reviewComplete: true });
    }
  }
}
