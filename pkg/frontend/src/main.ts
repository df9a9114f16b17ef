/** App bootstrap: hash routing, the session controller, and polling. */

import {
  ApiError,
  Client,
  type CreateSessionBody,
  type PrefabEntry,
  type ScenarioEntry,
  type SessionSnapshot,
} from "./api.js";
import { formModel, validateSubmission } from "./forms.js";
import { ingestEvents, initialState, type ViewState } from "./state.js";
import {
  renderPlay,
  renderSetup,
  type SetupError,
  type SetupSelection,
} from "./render.js";

export type Route = { view: "setup" } | { view: "play"; sid: string; since: number };

export function parseHash(hash: string): Route {
  const match = /^#\/play\/([0-9a-f]+)(?:\/(-?\d+))?$/.exec(hash);
  if (match && match[1]) {
    return { view: "play", sid: match[1], since: match[2] ? Number(match[2]) : -1 };
  }
  return { view: "setup" };
}

/** The human player's entity name in a scenario document, if any. */
export function humanRole(doc: Record<string, unknown>): string | null {
  const actors = doc.actors;
  if (!Array.isArray(actors)) {
    return null;
  }
  for (const raw of actors) {
    if (raw === null || typeof raw !== "object") {
      continue;
    }
    const entry = raw as { prefab?: unknown; name?: unknown };
    if (entry.prefab === "human_actor") {
      return typeof entry.name === "string" ? entry.name : "human_actor";
    }
  }
  return null;
}

export class PlayController {
  private state: ViewState;
  private alive = true;

  constructor(
    private readonly client: Client,
    private readonly root: HTMLElement,
    sessionId: string,
    private readonly onCursor: (seq: number) => void = () => undefined,
  ) {
    this.state = initialState(sessionId, "auto", null);
  }

  stop(): void {
    this.alive = false;
  }

  get snapshotState(): ViewState {
    return this.state;
  }

  private patch(next: Partial<ViewState>, render = true): void {
    this.state = { ...this.state, ...next };
    if (render) {
      this.render();
    }
  }

  private render(): void {
    renderPlay(this.root, this.state, {
      onChoice: (option) => void this.submit(option),
      onSubmitText: (raw) => void this.submit(raw),
      onStep: () => void this.step(),
      onToggleDesigner: (on) => this.patch({ designerMode: on }),
      onFilter: (entity) => this.patch({ entityFilter: entity }),
      onDraft: (raw) => this.patch({ draft: raw }, false),
    });
  }

  async start(snapshot?: SessionSnapshot, role: string | null = null): Promise<void> {
    let snap = snapshot;
    if (!snap) {
      try {
        snap = await this.client.getSession(this.state.sessionId);
      } catch (exc) {
        this.patch({ status: "failed", fatal: describe(exc) });
        return;
      }
    }
    this.patch({ status: snap.status, mode: snap.mode, role }, false);
    if (role === null) {
      await this.resolveRole(snap.scenario);
    }
    this.render();
    if (snap.mode === "auto" && snap.status === "paused") {
      try {
        await this.client.resume(this.state.sessionId);
      } catch (exc) {
        if (!(exc instanceof ApiError && exc.status === 409)) {
          this.patch({ fatal: describe(exc) });
        }
      }
    }
    await this.poll();
  }

  /** Recover the player's entity from the bundled scenario catalog. */
  private async resolveRole(scenarioId: string): Promise<void> {
    try {
      const scenarios = await this.client.listScenarios();
      const entry = scenarios.find((s) => s.id === scenarioId);
      if (entry) {
        this.patch({ role: humanRole(entry.doc) }, false);
      }
    } catch {
      // inline doc or catalog hiccup; the first pending request names the role
    }
  }

  private hasFooter(): boolean {
    return this.state.events.some((e) => e.kind === "run_footer");
  }

  private async poll(): Promise<void> {
    while (this.alive) {
      let page;
      try {
        page = await this.client.events(this.state.sessionId, this.state.lastSeq);
      } catch (exc) {
        if (this.alive) {
          this.patch({ status: "failed", fatal: describe(exc) });
        }
        return;
      }
      if (!this.alive) {
        return;
      }
      this.state = { ...ingestEvents(this.state, page.events), status: page.status };
      this.onCursor(this.state.lastSeq);
      if (page.status === "waiting_human") {
        if (this.state.pending === null && !this.state.submitting) {
          await this.refreshPending();
        }
      } else if (this.state.pending !== null) {
        this.state = { ...this.state, pending: null };
      }
      if (page.status === "failed" && this.state.fatal === null) {
        await this.fetchFailure();
      }
      this.render();
      if (page.status === "done" || page.status === "failed") {
        await this.drain();
        return;
      }
    }
  }

  /** After the episode ends, pick up any events behind the final status. */
  private async drain(): Promise<void> {
    while (this.alive && !this.hasFooter()) {
      let page;
      try {
        page = await this.client.events(this.state.sessionId, this.state.lastSeq);
      } catch {
        return;
      }
      if (page.events.length === 0) {
        return;
      }
      this.state = ingestEvents(this.state, page.events);
      this.onCursor(this.state.lastSeq);
      this.render();
    }
  }

  private async refreshPending(): Promise<void> {
    try {
      const page = await this.client.pending(this.state.sessionId);
      const next: Partial<ViewState> = { pending: page.pending, status: page.status };
      if (this.state.role === null && page.pending !== null) {
        next.role = page.pending.entity;
      }
      this.patch(next, false);
    } catch {
      // transient; the next poll retries
    }
  }

  private async fetchFailure(): Promise<void> {
    try {
      const snap = await this.client.getSession(this.state.sessionId);
      this.patch({ fatal: snap.error || "session failed" }, false);
    } catch {
      this.patch({ fatal: "session failed" }, false);
    }
  }

  private async submit(raw: string): Promise<void> {
    const pending = this.state.pending;
    if (pending === null || this.state.submitting) {
      return;
    }
    const model = formModel(pending);
    if (model.kind !== "choice") {
      this.patch({ draft: raw }, false);
    }
    const checked = validateSubmission(model, raw);
    if (!checked.ok) {
      this.patch({ formError: checked.message });
      return;
    }
    this.patch({ submitting: true, formError: null });
    try {
      await this.client.submitAction(this.state.sessionId, pending.request_id, checked.text);
      this.patch({ submitting: false, pending: null, draft: "" });
    } catch (exc) {
      if (exc instanceof ApiError && exc.status === 422) {
        this.patch({ submitting: false, formError: exc.detail });
      } else if (exc instanceof ApiError && exc.status === 409) {
        this.patch({ submitting: false, pending: null, formError: null }, false);
        await this.refreshPending();
        this.render();
      } else {
        this.patch({ submitting: false, formError: describe(exc) });
      }
    }
  }

  private async step(): Promise<void> {
    try {
      await this.client.step(this.state.sessionId);
    } catch (exc) {
      if (!(exc instanceof ApiError && exc.status === 409)) {
        this.patch({ formError: describe(exc) });
      }
    }
  }
}

function describe(exc: unknown): string {
  return exc instanceof Error ? exc.message : String(exc);
}

export interface App {
  stop(): void;
}

export function main(root: HTMLElement, client: Client, win: Window = window): App {
  let controller: PlayController | null = null;
  let currentSid: string | null = null;
  let generation = 0;

  async function showSetup(error: SetupError | null = null): Promise<void> {
    const gen = ++generation;
    let scenarios: ScenarioEntry[] = [];
    let prefabs: PrefabEntry[] = [];
    try {
      [scenarios, prefabs] = await Promise.all([
        client.listScenarios(),
        client.listPrefabs(),
      ]);
    } catch (exc) {
      if (gen === generation) {
        root.replaceChildren(
          Object.assign(document.createElement("p"), {
            className: "setup-error",
            textContent: `service unreachable: ${describe(exc)}`,
          }),
        );
      }
      return;
    }
    if (gen !== generation) {
      return;
    }
    renderSetup(root, scenarios, prefabs, error, {
      onCreate: (selection) => void create(selection, scenarios),
    });
  }

  async function create(selection: SetupSelection, scenarios: ScenarioEntry[]): Promise<void> {
    const body: CreateSessionBody = { mode: selection.mode };
    let role: string | null = null;
    if (selection.inlineDoc.trim() !== "") {
      let doc: unknown;
      try {
        doc = JSON.parse(selection.inlineDoc);
      } catch (exc) {
        return showSetup({ detail: `scenario document is not JSON: ${describe(exc)}`, report: [] });
      }
      if (doc === null || typeof doc !== "object" || Array.isArray(doc)) {
        return showSetup({ detail: "scenario document must be a JSON object", report: [] });
      }
      body.scenario = doc as Record<string, unknown>;
      role = humanRole(body.scenario);
    } else if (selection.scenarioId !== null) {
      body.scenario_id = selection.scenarioId;
      const entry = scenarios.find((s) => s.id === selection.scenarioId);
      role = entry ? humanRole(entry.doc) : null;
    } else {
      return showSetup({ detail: "pick a scenario first", report: [] });
    }
    let snapshot: SessionSnapshot;
    try {
      snapshot = await client.createSession(body);
    } catch (exc) {
      if (exc instanceof ApiError) {
        return showSetup({ detail: exc.detail, report: exc.report });
      }
      return showSetup({ detail: describe(exc), report: [] });
    }
    startPlay(snapshot.id, role, snapshot);
  }

  function startPlay(sid: string, role: string | null, snapshot?: SessionSnapshot): void {
    controller?.stop();
    currentSid = sid;
    generation += 1;
    win.history.replaceState(null, "", `#/play/${sid}/-1`);
    const ctl = new PlayController(client, root, sid, (seq) => {
      if (currentSid === sid) {
        win.history.replaceState(null, "", `#/play/${sid}/${seq}`);
      }
    });
    controller = ctl;
    void ctl.start(snapshot, role);
  }

  function route(): void {
    const parsed = parseHash(win.location.hash);
    if (parsed.view === "play") {
      if (parsed.sid !== currentSid) {
        startPlay(parsed.sid, null);
      }
      return;
    }
    controller?.stop();
    controller = null;
    currentSid = null;
    void showSetup();
  }

  win.addEventListener("hashchange", route);
  route();
  return {
    stop() {
      win.removeEventListener("hashchange", route);
      controller?.stop();
      controller = null;
      generation += 1;
    },
  };
}
