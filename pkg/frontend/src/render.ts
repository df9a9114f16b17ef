/** DOM rendering. Views are rebuilt from state on every change. */

import type { PrefabEntry, ReportItem, ScenarioEntry, TraceEvent } from "./api.js";
import { formModel, type FormModel } from "./forms.js";
import {
  designerFeed,
  isFinished,
  knownEntities,
  playerFeed,
  warningCount,
  type ViewState,
} from "./state.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: (Node | string)[] = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  node.append(...children);
  return node;
}

// -- session setup ------------------------------------------------------

export interface SetupSelection {
  scenarioId: string | null;
  inlineDoc: string;
  mode: string;
}

export interface SetupError {
  detail: string;
  report: ReportItem[];
}

export interface SetupHandlers {
  onCreate(selection: SetupSelection): void;
}

export function renderSetup(
  root: HTMLElement,
  scenarios: ScenarioEntry[],
  prefabs: PrefabEntry[],
  error: SetupError | null,
  handlers: SetupHandlers,
): void {
  const scenarioItems = scenarios.map((s, i) => {
    const input = el("input", {
      type: "radio",
      name: "scenario",
      value: s.id,
      id: `scenario-${s.id}`,
      class: "scenario-pick",
    });
    input.checked = i === 0;
    const label = el("label", { for: `scenario-${s.id}` }, [
      el("b", {}, [s.name]),
      el("span", { class: "engine" }, [` (${s.engine}) `]),
      el("span", { class: "premise" }, [s.premise]),
    ]);
    return el("li", {}, [input, label]);
  });

  const modeItems = ["auto", "step"].map((mode) => {
    const input = el("input", {
      type: "radio",
      name: "mode",
      value: mode,
      id: `mode-${mode}`,
      class: "mode-pick",
    });
    input.checked = mode === "auto";
    return el("li", {}, [input, el("label", { for: `mode-${mode}` }, [mode])]);
  });

  const inlineDoc = el("textarea", {
    class: "inline-doc",
    rows: "6",
    placeholder: "optional: paste a scenario document (JSON) to run instead",
  });

  const errorBox = error
    ? el("div", { class: "setup-error", role: "alert" }, [
        el("p", {}, [error.detail]),
        el(
          "ul",
          {},
          error.report.map((item) =>
            el("li", { class: "report-item" }, [`${item.path}: ${item.code} ${item.message}`]),
          ),
        ),
      ])
    : null;

  const create = el("button", { class: "create", type: "button" }, ["Start session"]);
  create.addEventListener("click", () => {
    const picked = root.querySelector<HTMLInputElement>("input.scenario-pick:checked");
    const mode = root.querySelector<HTMLInputElement>("input.mode-pick:checked");
    handlers.onCreate({
      scenarioId: picked ? picked.value : null,
      inlineDoc: inlineDoc.value,
      mode: mode ? mode.value : "auto",
    });
  });

  const prefabList = el(
    "ul",
    { class: "prefab-list" },
    prefabs.map((p) =>
      el("li", {}, [el("b", {}, [p.name]), ` (${p.role}) `, p.description]),
    ),
  );

  root.replaceChildren(
    el("div", { class: "setup" }, [
      el("h1", {}, ["fabula"]),
      ...(errorBox ? [errorBox] : []),
      el("h2", {}, ["Scenario"]),
      el("ul", { class: "scenario-list" }, scenarioItems),
      el("h2", {}, ["Mode"]),
      el("ul", { class: "mode-list" }, modeItems),
      inlineDoc,
      create,
      el("h2", {}, ["Prefabs"]),
      prefabList,
    ]),
  );
}

// -- play ----------------------------------------------------------------

export interface PlayHandlers {
  onChoice(option: string): void;
  onSubmitText(raw: string): void;
  onStep(): void;
  onToggleDesigner(on: boolean): void;
  onFilter(entity: string): void;
  onDraft(raw: string): void;
}

function summarize(payload: Record<string, unknown>): string {
  const text = JSON.stringify(payload);
  return text.length > 240 ? `${text.slice(0, 240)}…` : text;
}

function observationCard(event: TraceEvent): HTMLElement {
  const source = typeof event.payload.source === "string" ? event.payload.source : "";
  const text = typeof event.payload.text === "string" ? event.payload.text : "";
  return el("li", { class: "card observation", "data-seq": String(event.seq) }, [
    el("span", { class: "source" }, [source]),
    el("span", { class: "text" }, [text]),
  ]);
}

function traceCard(event: TraceEvent): HTMLElement {
  return el(
    "li",
    {
      class: `card trace-event kind-${event.kind}`,
      "data-seq": String(event.seq),
      "data-entity": event.entity ?? "",
    },
    [
      el("span", { class: "seq" }, [`#${event.seq}`]),
      el("span", { class: "kind" }, [event.kind]),
      el("span", { class: "entity" }, [event.entity ?? ""]),
      el("pre", { class: "payload" }, [summarize(event.payload)]),
    ],
  );
}

function pendingForm(
  model: FormModel,
  state: ViewState,
  handlers: PlayHandlers,
): HTMLElement {
  const parts: (Node | string)[] = [
    el("p", { class: "cta" }, [model.prompt]),
    el("pre", { class: "context" }, [model.context]),
  ];
  if (model.kind === "choice") {
    const buttons = model.options.map((option) => {
      const btn = el("button", { class: "choice", type: "button", "data-option": option }, [
        option,
      ]);
      btn.disabled = state.submitting;
      btn.addEventListener("click", () => handlers.onChoice(option));
      return btn;
    });
    parts.push(el("div", { class: "choices" }, buttons));
  } else {
    const input =
      model.kind === "float"
        ? el("input", { class: "float-input", type: "number", step: "any" })
        : el("textarea", { class: "free-input", rows: "3" });
    input.value = state.draft;
    input.disabled = state.submitting;
    input.addEventListener("input", () => handlers.onDraft(input.value));
    const send = el("button", { class: "submit", type: "button" }, ["Send"]);
    send.disabled = state.submitting;
    send.addEventListener("click", () => handlers.onSubmitText(input.value));
    parts.push(input, send);
  }
  if (state.formError !== null) {
    parts.push(el("p", { class: "form-error", role: "alert" }, [state.formError]));
  }
  return el("div", { class: "pending" }, parts);
}

function designerPanel(state: ViewState, handlers: PlayHandlers): HTMLElement {
  const filter = el("select", { class: "entity-filter" }, [
    el("option", { value: "" }, ["all entities"]),
    ...knownEntities(state).map((name) => el("option", { value: name }, [name])),
  ]);
  filter.value = state.entityFilter;
  filter.addEventListener("change", () => handlers.onFilter(filter.value));

  const count = warningCount(state);
  const warnings = el(
    "span",
    { class: "warnings", "data-count": String(count) },
    [`warnings: ${count}`],
  );

  return el("div", { class: "designer" }, [
    el("div", { class: "designer-controls" }, [filter, warnings]),
    el("ol", { class: "trace" }, designerFeed(state).map(traceCard)),
  ]);
}

export function renderPlay(root: HTMLElement, state: ViewState, handlers: PlayHandlers): void {
  const toggle = el("input", { type: "checkbox", class: "designer-toggle" });
  toggle.checked = state.designerMode;
  toggle.addEventListener("change", () => handlers.onToggleDesigner(toggle.checked));

  const header = el("header", {}, [
    el("span", { class: "status", "data-status": state.status }, [state.status]),
    el("label", { class: "designer-label" }, [toggle, " designer"]),
  ]);
  if (state.mode === "step" && state.status === "paused") {
    const step = el("button", { class: "step", type: "button" }, ["Step"]);
    step.addEventListener("click", () => handlers.onStep());
    header.append(step);
  }

  const parts: (Node | string)[] = [header];
  if (state.status === "done") {
    parts.push(el("div", { class: "banner done" }, ["Episode complete."]));
  } else if (state.status === "failed") {
    parts.push(el("div", { class: "banner failed" }, [state.fatal ?? "Session failed."]));
  }

  if (state.designerMode) {
    parts.push(designerPanel(state, handlers));
  } else {
    parts.push(el("ol", { class: "feed" }, playerFeed(state).map(observationCard)));
    if (state.pending !== null && state.status === "waiting_human" && !isFinished(state)) {
      parts.push(pendingForm(formModel(state.pending), state, handlers));
    }
  }

  root.replaceChildren(el("div", { class: "play" }, parts));
}
