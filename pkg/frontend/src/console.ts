// Console controller: wires the API client, state transitions, and renderer.
// One in-flight message at a time; a 404 on send means the server lost the
// session, so a fresh one is created and the message retried once.

import { ApiClient, ApiError, Mode } from "./api.js";
import {
  canSend,
  ConsoleState,
  initialState,
  sendFailed,
  sendResolved,
  sendStarted,
  sessionStarted,
} from "./state.js";
import { Handlers, render } from "./view.js";

export class Console {
  state: ConsoleState;
  private readonly handlers: Handlers;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
    private readonly doc: Document = document,
  ) {
    this.state = initialState();
    this.handlers = {
      onSend: (text) => void this.sendMessage(text),
      onSwitchMode: (mode) => void this.switchMode(mode as Mode),
      onRetry: () => void this.retry(),
    };
    this.render();
  }

  private render(): void {
    render(this.doc, this.root, this.state, this.handlers);
  }

  private update(state: ConsoleState): void {
    this.state = state;
    this.render();
  }

  async startSession(mode: Mode = this.state.mode, withDivider = false): Promise<void> {
    try {
      const info = await this.api.createSession(mode);
      this.update(sessionStarted(this.state, info.session_id, info.mode, withDivider));
    } catch (err) {
      this.update(sendFailed(this.state, describe(err)));
    }
  }

  async sendMessage(text: string): Promise<void> {
    if (!canSend(this.state)) {
      return;
    }
    this.update(sendStarted(this.state, text));
    await this.deliverPending();
  }

  private async deliverPending(): Promise<void> {
    const text = this.state.pendingText;
    if (text === null) {
      return;
    }
    if (this.state.sessionId === null) {
      await this.startSession(this.state.mode, false);
      if (this.state.sessionId === null) {
        return; // startSession already surfaced the error banner
      }
    }
    try {
      const trace = await this.api.postMessage(this.state.sessionId, text);
      this.update(sendResolved(this.state, trace));
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) {
        // Server no longer knows this session: bind a fresh one and retry once.
        const stale = this.state.sessionId;
        this.update({ ...this.state, sessionId: null });
        await this.startSession(this.state.mode, true);
        if (this.state.sessionId !== null && this.state.sessionId !== stale) {
          try {
            const trace = await this.api.postMessage(this.state.sessionId, text);
            this.update(sendResolved(this.state, trace));
            return;
          } catch (retryErr) {
            this.update(sendFailed(this.state, describe(retryErr)));
            return;
          }
        }
        return;
      }
      this.update(sendFailed(this.state, describe(err)));
    }
  }

  async retry(): Promise<void> {
    if (this.state.pendingText !== null) {
      this.update({ ...this.state, status: "sending", errorMessage: null });
      await this.deliverPending();
    } else {
      this.update({ ...this.state, status: "idle", errorMessage: null });
    }
  }

  async switchMode(mode: Mode): Promise<void> {
    // Mode changes always bind a new session and mark the transcript.
    this.update({ ...this.state, mode, sessionId: null });
    await this.startSession(mode, true);
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) {
    return err.status === 0 ? err.message : `server error ${err.status}: ${err.message}`;
  }
  return String(err);
}
