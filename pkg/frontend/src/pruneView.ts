/** View model for the prune-and-retrain cycle. Built purely from service
 * payloads: the displayed counts, accuracies, and per-pair summaries are the
 * server's numbers field-for-field. */

import type { JobResponse, PairSummary, PruneResponse } from "./types.js";

export interface PruneView {
  votes: number[];
  eliminated: number[];
  eliminatedCount: number;
  numPairs: number;
  perPair: PairSummary[];
  anythingEliminated: boolean;
  accuracyBefore: number | null;
  accuracyAfter: number | null;
  retrainState: "idle" | "queued" | "running" | "done" | "error";
  retrainError: string | null;
}

export function fromPruneResponse(res: PruneResponse): PruneView {
  const eliminatedCount = res.votes.filter((v) => v === 0).length;
  if (eliminatedCount !== res.eliminated.length) {
    throw new Error(
      `service payload inconsistent: ${eliminatedCount} zero votes but ` +
      `${res.eliminated.length} eliminated dimensions`,
    );
  }
  return {
    votes: res.votes.slice(),
    eliminated: res.eliminated.slice(),
    eliminatedCount,
    numPairs: res.num_pairs,
    perPair: res.per_pair.slice(),
    anythingEliminated: eliminatedCount > 0,
    accuracyBefore: null,
    accuracyAfter: null,
    retrainState: "idle",
    retrainError: null,
  };
}

export function withJob(view: PruneView, job: JobResponse): PruneView {
  return {
    ...view,
    accuracyBefore: job.accuracy_before,
    accuracyAfter: job.accuracy_after,
    retrainState: job.status,
    retrainError: job.error,
  };
}

/** Histogram rows for the vote display: (vote value, dimension count). */
export function voteHistogram(view: PruneView): Array<{ votes: number; dims: number }> {
  const counts = new Map<number, number>();
  for (const v of view.votes) counts.set(v, (counts.get(v) ?? 0) + 1);
  return [...counts.entries()]
    .sort((a, b) => a[0] - b[0])
    .map(([votes, dims]) => ({ votes, dims }));
}

export function statusLine(view: PruneView): string {
  if (!view.anythingEliminated) {
    return "no dimensions eliminated";
  }
  const base = `${view.eliminatedCount} of ${view.votes.length} dimensions eliminated`;
  if (view.retrainState === "done" && view.accuracyBefore !== null && view.accuracyAfter !== null) {
    const before = (100 * view.accuracyBefore).toFixed(2);
    const after = (100 * view.accuracyAfter).toFixed(2);
    return `${base}; target accuracy ${before}% → ${after}%`;
  }
  if (view.retrainState === "error") {
    return `${base}; retrain failed: ${view.retrainError ?? "unknown error"}`;
  }
  return base;
}

/** The retrain delta view only makes sense once something was eliminated. */
export function retrainEnabled(view: PruneView): boolean {
  return view.anythingEliminated && view.retrainState !== "running" && view.retrainState !== "queued";
}
