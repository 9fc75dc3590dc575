// Console state and pure transition functions (unit-tested in isolation).

import type { Mode, TurnTrace } from "./api.js";

export type ChatItem =
  | { kind: "user"; text: string }
  | { kind: "bot"; trace: TurnTrace }
  | { kind: "divider"; sessionId: string; mode: Mode };

export type ConnectionStatus = "idle" | "sending" | "error";

export interface ConsoleState {
  sessionId: string | null;
  mode: Mode;
  items: ChatItem[];
  status: ConnectionStatus;
  errorMessage: string | null;
  pendingText: string | null;
}

export function initialState(mode: Mode = "auto"): ConsoleState {
  return {
    sessionId: null,
    mode,
    items: [],
    status: "idle",
    errorMessage: null,
    pendingText: null,
  };
}

export function sessionStarted(
  state: ConsoleState,
  sessionId: string,
  mode: Mode,
  withDivider: boolean,
): ConsoleState {
  const items = withDivider
    ? [...state.items, { kind: "divider", sessionId, mode } as ChatItem]
    : state.items;
  return { ...state, sessionId, mode, items, errorMessage: null };
}

export function sendStarted(state: ConsoleState, text: string): ConsoleState {
  // Optimistic user bubble; composer is locked until the turn resolves.
  return {
    ...state,
    items: [...state.items, { kind: "user", text }],
    status: "sending",
    errorMessage: null,
    pendingText: text,
  };
}

export function sendResolved(state: ConsoleState, trace: TurnTrace): ConsoleState {
  return {
    ...state,
    items: [...state.items, { kind: "bot", trace }],
    status: "idle",
    pendingText: null,
  };
}

export function sendFailed(state: ConsoleState, message: string): ConsoleState {
  return { ...state, status: "error", errorMessage: message };
}

export function canSend(state: ConsoleState): boolean {
  return state.status !== "sending";
}
