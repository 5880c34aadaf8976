/** Thin fetch client over the review service endpoints. */

import type { DecisionKind, FlagPage, FlagView, Stats } from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ConflictError extends Error {}
export class NotFoundError extends Error {}
export class ServiceUnreachableError extends Error {}

export class ReviewApi {
  constructor(
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
    private readonly base: string = "",
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    let response: Response;
    try {
      response = await this.fetchImpl(this.base + path, init);
    } catch (error) {
      throw new ServiceUnreachableError(String(error));
    }
    if (response.status === 404) throw new NotFoundError(path);
    if (response.status === 409) throw new ConflictError(path);
    return response;
  }

  async listFlags(
    status: "pending" | "decided" | null,
    page: number,
    pageSize: number,
    category: string | null,
  ): Promise<FlagPage> {
    const params = new URLSearchParams({ page: String(page), page_size: String(pageSize) });
    if (status) params.set("status", status);
    if (category) params.set("category", category);
    const response = await this.request(`/api/flags?${params.toString()}`);
    return (await response.json()) as FlagPage;
  }

  async getFlag(flagId: string): Promise<FlagView> {
    const response = await this.request(`/api/flags/${flagId}`);
    return (await response.json()) as FlagView;
  }

  async decide(
    flagId: string,
    decision: DecisionKind,
    code: string | null,
    reviewer: string,
  ): Promise<FlagView> {
    const body: Record<string, unknown> = { decision, reviewer };
    if (code) body.code = code;
    const response = await this.request(`/api/flags/${flagId}/decision`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!response.ok) {
      throw new Error(`decision rejected with status ${response.status}`);
    }
    return (await response.json()) as FlagView;
  }

  async stats(): Promise<Stats> {
    const response = await this.request("/api/stats");
    return (await response.json()) as Stats;
  }

  async exportDataset(): Promise<string> {
    const response = await this.request("/api/export");
    return await response.text();
  }
}
