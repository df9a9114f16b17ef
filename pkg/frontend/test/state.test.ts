import { describe, expect, it } from "vitest";

import type { TraceEvent } from "../src/api.js";
import {
  countWarnings,
  designerFeed,
  ingestEvents,
  initialState,
  knownEntities,
  playerFeed,
  warningCount,
} from "../src/state.js";
import { fixture, type SessionFixture } from "./helpers.js";

const SECRET = "the vault code is 7413";

function ev(
  seq: number,
  kind = "observation",
  entity: string | null = "A",
  payload: Record<string, unknown> = {},
): TraceEvent {
  return { seq, kind, step: 0, sim_time: 0, entity, payload };
}

describe("ingestEvents", () => {
  it("keeps seq order across out-of-order batches", () => {
    const s0 = initialState("s", "auto", "A");
    const s1 = ingestEvents(s0, [ev(2), ev(0)]);
    const s2 = ingestEvents(s1, [ev(1), ev(3)]);
    expect(s2.events.map((e) => e.seq)).toEqual([0, 1, 2, 3]);
    expect(s2.lastSeq).toBe(3);
  });

  it("drops seqs already seen, within and across batches", () => {
    const s0 = initialState("s", "auto", "A");
    const s1 = ingestEvents(s0, [ev(0), ev(1), ev(1)]);
    const s2 = ingestEvents(s1, [ev(1), ev(0), ev(2)]);
    expect(s2.events.map((e) => e.seq)).toEqual([0, 1, 2]);
  });

  it("returns the state unchanged for an empty or fully-seen batch", () => {
    const s0 = ingestEvents(initialState("s", "auto", null), [ev(0)]);
    expect(ingestEvents(s0, [])).toBe(s0);
    expect(ingestEvents(s0, [ev(0)])).toBe(s0);
  });

  it("replaying the full history after a refresh adds nothing", () => {
    const gate = fixture<SessionFixture>("gatehouse");
    const once = ingestEvents(initialState("s", "auto", "Player"), gate.events);
    const twice = ingestEvents(once, gate.events);
    expect(twice.events.length).toBe(gate.events.length);
    expect(twice).toBe(once);
  });
});

describe("playerFeed", () => {
  it("shows only observations addressed to the player's entity", () => {
    const gate = fixture<SessionFixture>("gatehouse");
    const state = ingestEvents(initialState("s", "auto", "Player"), gate.events);
    const feed = playerFeed(state);
    expect(feed.every((e) => e.kind === "observation" && e.entity === "Player")).toBe(true);
    expect(feed.map((e) => e.seq)).toEqual([...feed.map((e) => e.seq)].sort((a, b) => a - b));
    expect(feed.length).toBeGreaterThan(0);
  });

  it("shows every observation when the session has no human", () => {
    const gate = fixture<SessionFixture>("gatehouse");
    const state = ingestEvents(initialState("s", "auto", null), gate.events);
    const expected = gate.events.filter((e) => e.kind === "observation").length;
    expect(playerFeed(state).length).toBe(expected);
  });
});

describe("designer view", () => {
  it("exposes the full trace, filterable by entity", () => {
    const gate = fixture<SessionFixture>("gatehouse");
    let state = ingestEvents(initialState("s", "auto", "Player"), gate.events);
    expect(designerFeed(state).length).toBe(gate.events.length);
    state = { ...state, entityFilter: "Narrator" };
    const filtered = designerFeed(state);
    expect(filtered.length).toBeGreaterThan(0);
    expect(filtered.every((e) => e.entity === "Narrator")).toBe(true);
  });

  it("counts warnings exactly as a trace scan does", () => {
    const ridge = fixture<SessionFixture>("ridge_signal");
    const state = ingestEvents(initialState("s", "auto", null), ridge.events);
    const footer = ridge.events.find((e) => e.kind === "run_footer");
    const scan = ridge.events.filter((e) => e.kind === "warning").length;
    expect(scan).toBeGreaterThan(0);
    expect(warningCount(state)).toBe(scan);
    expect(warningCount(state)).toBe((footer?.payload as { warnings: number }).warnings);
    expect(countWarnings([])).toBe(0);
  });

  it("lists entities in first-seen order without nulls", () => {
    const gate = fixture<SessionFixture>("gatehouse");
    const state = ingestEvents(initialState("s", "auto", "Player"), gate.events);
    expect(knownEntities(state)).toEqual(["Player", "Narrator"]);
  });
});

describe("secrecy", () => {
  it("keeps another entity's secret out of the player feed", () => {
    const info = fixture<SessionFixture>("information_asymmetry");
    const asHolder = ingestEvents(initialState("s", "auto", "Vera"), info.events);
    const asOther = ingestEvents(initialState("s", "auto", "Walt"), info.events);
    const text = (feed: TraceEvent[]) => feed.map((e) => JSON.stringify(e.payload)).join("\n");
    expect(text(playerFeed(asHolder))).toContain(SECRET);
    expect(text(playerFeed(asOther))).not.toContain(SECRET);
  });
});
