/** Typed client for the session service HTTP API. */

export interface SessionSnapshot {
  id: string;
  status: string;
  mode: string;
  scenario: string;
  cursor: number;
  error: string;
}

export interface TraceEvent {
  seq: number;
  kind: string;
  step: number;
  sim_time: number;
  /** The acting, observing, or calling entity; null for run-level events. */
  entity: string | null;
  payload: Record<string, unknown>;
}

export type OutputType = "free" | "choice" | "float";

export interface PendingRequest {
  request_id: string;
  entity: string;
  output_type: OutputType;
  options: string[];
  call_to_action: string;
  context: string;
  step: number;
}

export interface ScenarioEntry {
  id: string;
  name: string;
  engine: string;
  premise: string;
  doc: Record<string, unknown>;
}

export interface PrefabParam {
  name: string;
  type: string;
  default: unknown;
}

export interface PrefabEntry {
  name: string;
  role: string;
  description: string;
  components: string[];
  params: PrefabParam[];
}

export interface EventsPage {
  events: TraceEvent[];
  status: string;
}

export interface PendingPage {
  pending: PendingRequest | null;
  status: string;
}

export interface ReportItem {
  path: string;
  code: string;
  message: string;
}

export interface CreateSessionBody {
  scenario_id?: string;
  scenario?: Record<string, unknown>;
  mode: string;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    readonly detail: string,
    readonly report: ReportItem[] = [],
  ) {
    super(detail ? `${code}: ${detail}` : code);
    this.name = "ApiError";
  }
}

export class Client {
  constructor(readonly baseUrl: string) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.body = JSON.stringify(body);
      init.headers = { "Content-Type": "application/json" };
    }
    const resp = await fetch(this.baseUrl + path, init);
    if (resp.status === 204) {
      return undefined as T;
    }
    let data: unknown = null;
    try {
      data = await resp.json();
    } catch {
      data = null;
    }
    if (!resp.ok) {
      const err = (data ?? {}) as {
        error?: string;
        detail?: string;
        report?: ReportItem[];
      };
      throw new ApiError(
        resp.status,
        err.error ?? "http_error",
        err.detail ?? resp.statusText,
        Array.isArray(err.report) ? err.report : [],
      );
    }
    return data as T;
  }

  listScenarios(): Promise<ScenarioEntry[]> {
    return this.request<{ scenarios: ScenarioEntry[] }>("GET", "/scenarios").then(
      (page) => page.scenarios,
    );
  }

  listPrefabs(): Promise<PrefabEntry[]> {
    return this.request<{ prefabs: PrefabEntry[] }>("GET", "/prefabs").then(
      (page) => page.prefabs,
    );
  }

  createSession(body: CreateSessionBody): Promise<SessionSnapshot> {
    return this.request("POST", "/sessions", body);
  }

  getSession(id: string): Promise<SessionSnapshot> {
    return this.request("GET", `/sessions/${id}`);
  }

  step(id: string): Promise<SessionSnapshot> {
    return this.request("POST", `/sessions/${id}/step`);
  }

  resume(id: string): Promise<SessionSnapshot> {
    return this.request("POST", `/sessions/${id}/resume`);
  }

  pause(id: string): Promise<SessionSnapshot> {
    return this.request("POST", `/sessions/${id}/pause`);
  }

  events(id: string, since: number): Promise<EventsPage> {
    return this.request("GET", `/sessions/${id}/events?since=${since}`);
  }

  pending(id: string): Promise<PendingPage> {
    return this.request("GET", `/sessions/${id}/pending`);
  }

  submitAction(id: string, requestId: string, text: string): Promise<SessionSnapshot> {
    return this.request("POST", `/sessions/${id}/actions`, {
      request_id: requestId,
      text,
    });
  }

  deleteSession(id: string): Promise<void> {
    return this.request("DELETE", `/sessions/${id}`);
  }
}
