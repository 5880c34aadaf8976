/** DOM rendering: pure functions from store state to markup plus event wiring. */

import { highlightMention, escapeHtml } from "./highlight.js";
import type { ReviewStore, StoreState } from "./store.js";
import type { FlagView } from "./types.js";

function verdictChip(flag: FlagView): string {
  if (flag.verifier_verdict === null) return '<span class="chip chip-indet">indeterminate</span>';
  return flag.verifier_verdict
    ? '<span class="chip chip-yes">verifier: valid</span>'
    : '<span class="chip chip-no">verifier: not valid</span>';
}

function queueRows(state: StoreState): string {
  return state.flags
    .map((flag, index) => {
      const selected = index === state.selectedIndex ? " selected" : "";
      return `
        <tr class="flag-row${selected}" data-flag-id="${flag.flag_id}">
          <td>${escapeHtml(flag.doc_id)}</td>
          <td>${escapeHtml(flag.mention)}</td>
          <td><span class="chip chip-${flag.category.toLowerCase()}">${flag.category}</span></td>
          <td>${verdictChip(flag)}</td>
          <td><code>${escapeHtml(flag.code)}</code></td>
        </tr>`;
    })
    .join("");
}

function detailPanel(state: StoreState): string {
  const flag = state.detail;
  if (!flag) return "";
  const decided = flag.decision !== null;
  const disabled = decided ? " disabled" : "";
  const candidates = flag.candidates
    .map(
      (candidate) => `
        <li>
          <button class="candidate" data-code="${escapeHtml(candidate.code)}"${disabled}>
            ${escapeHtml(candidate.label)} <code>${escapeHtml(candidate.code)}</code>
            <span class="score">${candidate.score.toFixed(3)}</span>
          </button>
        </li>`,
    )
    .join("");
  const decidedNote = decided
    ? `<p class="decided-note">decided: <strong>${flag.decision}</strong>${
        flag.decision_code ? ` -> <code>${escapeHtml(flag.decision_code)}</code>` : ""
      }</p>`
    : "";
  return `
    <section class="detail" data-flag-id="${flag.flag_id}">
      <header>
        <h2>${escapeHtml(flag.mention)} <code>${escapeHtml(flag.code)}</code></h2>
        <span class="chip chip-${flag.category.toLowerCase()}">${flag.category}</span>
        ${verdictChip(flag)}
        ${
          flag.prior_code
            ? `<span class="chip chip-prior">prior: <code>${escapeHtml(flag.prior_code)}</code></span>`
            : ""
        }
      </header>
      <blockquote class="context">${highlightMention(flag.context_snippet, flag.mention)}</blockquote>
      <ul class="candidates">${candidates}</ul>
      <div class="actions">
        <button id="btn-accept"${disabled}>accept (a)</button>
        <button id="btn-reject"${disabled}>reject (r)</button>
        <input id="edit-code" placeholder="HP:0001250 / ORPHA:79501" ${decided ? "disabled" : ""} />
        <button id="btn-edit"${disabled}>edit (e)</button>
      </div>
      ${decidedNote}
    </section>`;
}

function statsPanel(state: StoreState): string {
  const stats = state.stats;
  const stale = state.statsStale ? ' <span class="chip chip-stale">stale</span>' : "";
  if (!stats) return `<aside id="stats">no stats yet${stale}</aside>`;
  const kappa = stats.kappa === null ? "n/a" : stats.kappa.toFixed(2);
  return `
    <aside id="stats">
      <span class="badge" id="badge-pending">${stats.pending} pending</span>
      <span class="badge" id="badge-decided">${stats.decided} decided</span>
      <span class="badge" id="badge-kappa">kappa ${kappa}</span>${stale}
    </aside>`;
}

export function renderApp(root: HTMLElement, state: StoreState): void {
  const banner = state.banner
    ? `<div id="banner" class="banner">${escapeHtml(state.banner)}</div>`
    : "";
  const complete = state.reviewComplete
    ? '<div id="review-complete">Review complete. <a href="/api/export">Export dataset</a></div>'
    : "";
  root.innerHTML = `
    ${banner}
    ${statsPanel(state)}
    <main>
      <section class="queue">
        <div class="queue-header">
          <span id="queue-count" class="badge">${state.total} flags</span>
          <label>filter:
            <select id="category-filter">
              <option value="">all</option>
              <option value="TP"${state.categoryFilter === "TP" ? " selected" : ""}>TP</option>
              <option value="FN"${state.categoryFilter === "FN" ? " selected" : ""}>FN</option>
              <option value="FP"${state.categoryFilter === "FP" ? " selected" : ""}>FP</option>
            </select>
          </label>
        </div>
        ${complete}
        <table>
          <thead><tr><th>doc</th><th>mention</th><th>cat</th><th>verifier</th><th>code</th></tr></thead>
          <tbody>${queueRows(state)}</tbody>
        </table>
      </section>
      ${detailPanel(state)}
    </main>`;
}

/** Rewires delegated event handlers; call once on the root element. */
export function bindEvents(root: HTMLElement, store: ReviewStore): void {
  root.addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    const row = target.closest(".flag-row") as HTMLElement | null;
    if (row?.dataset.flagId) {
      void store.openDetail(row.dataset.flagId);
      return;
    }
    const candidate = target.closest(".candidate") as HTMLButtonElement | null;
    if (candidate?.dataset.code) {
      const input = root.querySelector<HTMLInputElement>("#edit-code");
      if (input && !input.disabled) input.value = candidate.dataset.code;
      return;
    }
    if (target.id === "btn-accept") void store.decide("accept");
    if (target.id === "btn-reject") void store.decide("reject");
    if (target.id === "btn-edit") {
      const input = root.querySelector<HTMLInputElement>("#edit-code");
      void store.decide("edit", input?.value ?? "");
    }
  });
  root.addEventListener("change", (event) => {
    const target = event.target as HTMLSelectElement;
    if (target.id === "category-filter") {
      const value = target.value || null;
      void store.setCategoryFilter(value as never);
    }
  });
}
