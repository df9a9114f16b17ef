/** View state and the pure derivations the play view renders from. */

import type { PendingRequest, TraceEvent } from "./api.js";

export interface ViewState {
  sessionId: string;
  mode: string;
  status: string;
  /** The human player's entity, or null when the session has no human. */
  role: string | null;
  /** Every ingested trace event, in seq order, no duplicates. */
  events: TraceEvent[];
  /** Highest ingested seq; the next poll cursor. */
  lastSeq: number;
  pending: PendingRequest | null;
  designerMode: boolean;
  /** Entity name to restrict the designer feed to; "" means all. */
  entityFilter: string;
  submitting: boolean;
  formError: string | null;
  /** Text input preserved across rejected submissions. */
  draft: string;
  fatal: string | null;
}

export function initialState(sessionId: string, mode: string, role: string | null): ViewState {
  return {
    sessionId,
    mode,
    status: "paused",
    role,
    events: [],
    lastSeq: -1,
    pending: null,
    designerMode: false,
    entityFilter: "",
    submitting: false,
    formError: null,
    draft: "",
    fatal: null,
  };
}

/** Merge a batch of events, dropping seqs already seen; keeps seq order. */
export function ingestEvents(state: ViewState, incoming: readonly TraceEvent[]): ViewState {
  const seen = new Set(state.events.map((e) => e.seq));
  const fresh: TraceEvent[] = [];
  for (const e of incoming) {
    if (!seen.has(e.seq)) {
      seen.add(e.seq);
      fresh.push(e);
    }
  }
  if (fresh.length === 0) {
    return state;
  }
  const events = [...state.events, ...fresh].sort((a, b) => a.seq - b.seq);
  const last = events[events.length - 1];
  return { ...state, events, lastSeq: last ? last.seq : -1 };
}

/** Observations addressed to the player; every observation when no role. */
export function playerFeed(state: ViewState): TraceEvent[] {
  return state.events.filter(
    (e) => e.kind === "observation" && (state.role === null || e.entity === state.role),
  );
}

/** The full trace, optionally restricted to one entity. */
export function designerFeed(state: ViewState): TraceEvent[] {
  if (state.entityFilter === "") {
    return state.events;
  }
  return state.events.filter((e) => e.entity === state.entityFilter);
}

export function countWarnings(events: readonly TraceEvent[]): number {
  return events.filter((e) => e.kind === "warning").length;
}

export function warningCount(state: ViewState): number {
  return countWarnings(state.events);
}

/** Distinct entity names in first-seen order, for the designer filter. */
export function knownEntities(state: ViewState): string[] {
  const out: string[] = [];
  for (const e of state.events) {
    if (e.entity && !out.includes(e.entity)) {
      out.push(e.entity);
    }
  }
  return out;
}

export function isFinished(state: ViewState): boolean {
  return state.status === "done" || state.status === "failed";
}
