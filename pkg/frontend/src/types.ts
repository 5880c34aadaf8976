/** Wire types mirrored from the review service API. */

export type FlagCategory = "TP" | "FN" | "FP";
export type DecisionKind = "accept" | "reject" | "edit";

export interface CandidateView {
  label: string;
  code: string;
  score: number;
}

export interface FlagView {
  flag_id: string;
  doc_id: string;
  mention: string;
  code: string;
  category: FlagCategory;
  verifier_verdict: boolean | null;
  action: "flag" | "no_flag";
  context_snippet: string;
  candidates: CandidateView[];
  prior_code: string | null;
  decision: DecisionKind | null;
  decision_code: string | null;
  decided_by: string | null;
  decided_at: string | null;
}

export interface FlagPage {
  total: number;
  page: number;
  page_size: number;
  items: FlagView[];
}

export interface Stats {
  pending: number;
  decided: number;
  no_flag: number;
  by_category: Record<FlagCategory, number>;
  kappa: number | null;
}

export interface DecisionRequest {
  decision: DecisionKind;
  code?: string;
  reviewer: string;
}
