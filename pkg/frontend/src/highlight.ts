/** Mention emphasis inside context snippets, with HTML-safe escaping. */

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/**
 * Wrap every case-insensitive occurrence of the mention in <mark> tags.
 * The snippet is escaped first so model or note text can never inject markup.
 */
export function highlightMention(snippet: string, mention: string): string {
  if (!snippet) return "";
  if (!mention) return escapeHtml(snippet);
  const lowered = snippet.toLowerCase();
  const needle = mention.toLowerCase();
  const parts: string[] = [];
  let cursor = 0;
  while (cursor <= snippet.length - needle.length) {
    const hit = lowered.indexOf(needle, cursor);
    if (hit < 0) break;
    parts.push(escapeHtml(snippet.slice(cursor, hit)));
    parts.push(`<mark>${escapeHtml(snippet.slice(hit, hit + needle.length))}</mark>`);
    cursor = hit + needle.length;
  }
  parts.push(escapeHtml(snippet.slice(cursor)));
  return parts.join("");
}
