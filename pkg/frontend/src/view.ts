// DOM rendering: a pure function of ConsoleState. All trace fields are
// verbatim API values; the panel is collapsed by default.

import type { TurnTrace } from "./api.js";
import type { ChatItem, ConsoleState } from "./state.js";

export interface Handlers {
  onSend(text: string): void;
  onSwitchMode(mode: string): void;
  onRetry(): void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function renderTracePanel(doc: Document, trace: TurnTrace): HTMLElement {
  const details = el(doc, "details", "trace");
  details.dataset.field = "trace";
  const summary = el(doc, "summary");
  const badge = el(
    doc,
    "span",
    trace.decision === "no_query" ? "badge badge-noquery" : "badge badge-query",
    trace.decision === "no_query" ? "No Query" : "Query",
  );
  badge.dataset.field = "decision";
  badge.dataset.decision = trace.decision;
  summary.append(badge);
  summary.append(doc.createTextNode(" trace"));
  details.append(summary);

  const body = el(doc, "div", "trace-body");
  if (trace.decision === "query") {
    const queryRow = el(doc, "div", "trace-row");
    queryRow.append(el(doc, "span", "trace-label", "query"));
    const queryValue = el(doc, "span", "trace-value", trace.query ?? "");
    queryValue.dataset.field = "query";
    queryRow.append(queryValue);
    body.append(queryRow);

    const knowledgeRow = el(doc, "div", "trace-row");
    knowledgeRow.append(el(doc, "span", "trace-label", "knowledge"));
    const knowledgeValue = el(doc, "span", "trace-value", trace.knowledge);
    knowledgeValue.dataset.field = "knowledge";
    knowledgeRow.append(knowledgeValue);
    body.append(knowledgeRow);
  } else {
    body.append(el(doc, "div", "trace-row trace-muted", "no retrieval"));
  }
  const t = trace.timings;
  const timings = el(
    doc,
    "div",
    "trace-row trace-timings",
    `rd/qg ${t.rd_qg_ms.toFixed(1)}ms · search ${t.search_ms.toFixed(1)}ms · ` +
      `rg ${t.rg_ms.toFixed(1)}ms`,
  );
  timings.dataset.field = "timings";
  body.append(timings);
  details.append(body);
  return details;
}

function renderItem(doc: Document, item: ChatItem): HTMLElement {
  if (item.kind === "user") {
    const bubble = el(doc, "div", "bubble bubble-user", item.text);
    bubble.dataset.role = "user";
    return bubble;
  }
  if (item.kind === "bot") {
    const wrap = el(doc, "div", "turn-bot");
    const bubble = el(doc, "div", "bubble bubble-bot", item.trace.response);
    bubble.dataset.role = "bot";
    bubble.dataset.field = "response";
    wrap.append(bubble);
    wrap.append(renderTracePanel(doc, item.trace));
    return wrap;
  }
  const divider = el(
    doc,
    "div",
    "divider",
    `new session ${item.sessionId} · mode ${item.mode}`,
  );
  divider.dataset.role = "divider";
  divider.dataset.sessionId = item.sessionId;
  return divider;
}

export function render(doc: Document, root: HTMLElement, state: ConsoleState,
                       handlers: Handlers): void {
  root.textContent = "";

  const header = el(doc, "header", "topbar");
  header.append(el(doc, "h1", "title", "UniRQR console"));
  const modeSelect = el(doc, "select", "mode-select");
  modeSelect.dataset.field = "mode";
  for (const [value, label] of [
    ["auto", "auto"],
    ["always_retrieve", "always retrieve"],
    ["never_retrieve", "never retrieve"],
  ]) {
    const option = el(doc, "option", undefined, label);
    option.value = value;
    option.selected = value === state.mode;
    modeSelect.append(option);
  }
  modeSelect.addEventListener("change", () => handlers.onSwitchMode(modeSelect.value));
  header.append(modeSelect);
  const sessionLabel = el(doc, "span", "session-label",
                          state.sessionId ? `session ${state.sessionId}` : "no session");
  sessionLabel.dataset.field = "session";
  if (state.sessionId) sessionLabel.dataset.sessionId = state.sessionId;
  header.append(sessionLabel);
  const status = el(doc, "span", `status status-${state.status}`, state.status);
  status.dataset.field = "status";
  header.append(status);
  root.append(header);

  if (state.errorMessage !== null) {
    const banner = el(doc, "div", "error-banner");
    banner.dataset.field = "error";
    banner.append(el(doc, "span", undefined, state.errorMessage));
    const retry = el(doc, "button", "retry", "retry");
    retry.addEventListener("click", () => handlers.onRetry());
    banner.append(retry);
    root.append(banner);
  }

  const transcript = el(doc, "main", "transcript");
  transcript.dataset.field = "transcript";
  for (const item of state.items) {
    transcript.append(renderItem(doc, item));
  }
  root.append(transcript);

  const composer = el(doc, "form", "composer");
  const input = el(doc, "input");
  input.type = "text";
  input.placeholder = "say something";
  input.dataset.field = "input";
  const send = el(doc, "button", "send", "send");
  send.type = "submit";
  send.disabled = state.status === "sending";
  send.dataset.field = "send";
  composer.append(input, send);
  composer.addEventListener("submit", (event) => {
    event.preventDefault();
    const text = input.value.trim();
    if (text) {
      input.value = "";
      handlers.onSend(text);
    }
  });
  root.append(composer);
}
