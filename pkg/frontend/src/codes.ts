/** Client-side ontology code validation, matching the service's canonical form. */

const CODE_RE = /^\s*(hp|orpha|orphanet)\s*[:_]\s*(\d+)\s*$/i;

/** Canonicalize a typed code, or return null when it is not a valid code. */
export function normalizeCode(raw: string): string | null {
  const match = CODE_RE.exec(raw);
  if (!match) return null;
  const prefix = match[1]!.toLowerCase();
  const digits = match[2]!;
  if (prefix === "hp") {
    return `HP:${digits.padStart(7, "0")}`;
  }
  return `ORPHA:${String(parseInt(digits, 10))}`;
}

export function isValidCode(raw: string): boolean {
  return normalizeCode(raw) !== null;
}
