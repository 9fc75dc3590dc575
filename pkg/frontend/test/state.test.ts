import { describe, expect, it } from "vitest";

import {
  canSend,
  initialState,
  sendFailed,
  sendResolved,
  sendStarted,
  sessionStarted,
} from "../src/state.js";
import { NO_QUERY_TURN } from "./fixtures.js";

describe("state transitions", () => {
  it("optimistic bubble appears on send and locks the composer", () => {
    const state = sendStarted(initialState(), "hi");
    expect(state.items).toEqual([{ kind: "user", text: "hi" }]);
    expect(state.status).toBe("sending");
    expect(canSend(state)).toBe(false);
  });

  it("resolution appends the bot turn and unlocks", () => {
    const state = sendResolved(sendStarted(initialState(), "hi"), NO_QUERY_TURN);
    expect(state.items).toHaveLength(2);
    expect(state.items[1]).toEqual({ kind: "bot", trace: NO_QUERY_TURN });
    expect(state.status).toBe("idle");
    expect(state.pendingText).toBeNull();
  });

  it("failure keeps the pending text for retry", () => {
    const state = sendFailed(sendStarted(initialState(), "hi"), "boom");
    expect(state.pendingText).toBe("hi");
    expect(state.status).toBe("error");
    expect(state.errorMessage).toBe("boom");
  });

  it("session start with divider records the boundary", () => {
    const state = sessionStarted(initialState(), "s1", "never_retrieve", true);
    expect(state.sessionId).toBe("s1");
    expect(state.mode).toBe("never_retrieve");
    expect(state.items).toEqual([
      { kind: "divider", sessionId: "s1", mode: "never_retrieve" },
    ]);
  });

  it("session start without divider leaves the transcript untouched", () => {
    const state = sessionStarted(initialState(), "s1", "auto", false);
    expect(state.items).toEqual([]);
  });
});
