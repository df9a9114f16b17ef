/** Action input models, generated purely from the pending request. */

import type { PendingRequest } from "./api.js";

export type FormModel =
  | { kind: "choice"; requestId: string; prompt: string; context: string; options: string[] }
  | { kind: "free"; requestId: string; prompt: string; context: string }
  | { kind: "float"; requestId: string; prompt: string; context: string };

export function formModel(pending: PendingRequest): FormModel {
  const base = {
    requestId: pending.request_id,
    prompt: pending.call_to_action,
    context: pending.context,
  };
  switch (pending.output_type) {
    case "choice":
      return { kind: "choice", ...base, options: [...pending.options] };
    case "float":
      return { kind: "float", ...base };
    default:
      return { kind: "free", ...base };
  }
}

export type Validation = { ok: true; text: string } | { ok: false; message: string };

/** Client-side mirror of what the service will accept. */
export function validateSubmission(model: FormModel, raw: string): Validation {
  if (model.kind === "choice") {
    if (model.options.includes(raw)) {
      return { ok: true, text: raw };
    }
    return { ok: false, message: "pick one of the offered options" };
  }
  const trimmed = raw.trim();
  if (model.kind === "float") {
    if (trimmed === "" || Number.isNaN(Number(trimmed))) {
      return { ok: false, message: "enter a number" };
    }
    return { ok: true, text: trimmed };
  }
  if (trimmed === "") {
    return { ok: false, message: "write an action first" };
  }
  return { ok: true, text: raw };
}
