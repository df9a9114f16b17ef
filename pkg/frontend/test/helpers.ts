import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import type {
  PendingRequest,
  PrefabEntry,
  ScenarioEntry,
  SessionSnapshot,
  TraceEvent,
} from "../src/api.js";

const here = dirname(fileURLToPath(import.meta.url));

export interface CatalogFixture {
  scenarios: ScenarioEntry[];
  prefabs: PrefabEntry[];
}

export interface SessionFixture {
  snapshot: SessionSnapshot;
  pending?: PendingRequest;
  mid_events?: TraceEvent[];
  events: TraceEvent[];
}

export function fixture<T>(name: string): T {
  const path = join(here, "fixtures", `${name}.json`);
  return JSON.parse(readFileSync(path, "utf-8")) as T;
}

/** Poll until `probe` returns something truthy; fail after `timeoutMs`. */
export async function waitFor<T>(
  probe: () => T | null | undefined | false,
  timeoutMs = 15000,
  label = "condition",
): Promise<T> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    const got = probe();
    if (got) {
      return got;
    }
    if (Date.now() > deadline) {
      throw new Error(`timed out waiting for ${label}`);
    }
    await new Promise((resolve) => setTimeout(resolve, 25));
  }
}
