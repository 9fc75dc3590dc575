// Thin typed client over the chat service. The console performs no
// inference logic; every displayed value comes verbatim from these payloads.

export type Mode = "auto" | "always_retrieve" | "never_retrieve";

export interface Timings {
  rd_qg_ms: number;
  search_ms: number;
  rg_ms: number;
}

export interface TurnTrace {
  decision: "no_query" | "query";
  query: string | null;
  knowledge: string;
  response: string;
  timings: Timings;
  session_id?: string;
}

export interface SessionInfo {
  session_id: string;
  mode: Mode;
}

export class ApiError extends Error {
  constructor(public readonly status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + path, {
        method,
        headers: { "Content-Type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new ApiError(0, `network failure: ${String(err)}`);
    }
    const text = await response.text();
    let payload: unknown = {};
    if (text) {
      try {
        payload = JSON.parse(text);
      } catch {
        throw new ApiError(response.status, "malformed response body");
      }
    }
    if (!response.ok) {
      const detail = (payload as { error?: string }).error ?? response.statusText;
      throw new ApiError(response.status, detail);
    }
    return payload as T;
  }

  createSession(mode: Mode): Promise<SessionInfo> {
    return this.request<SessionInfo>("POST", "/api/sessions", { mode });
  }

  postMessage(sessionId: string, text: string): Promise<TurnTrace> {
    return this.request<TurnTrace>("POST", `/api/sessions/${sessionId}/messages`, { text });
  }

  health(): Promise<{ status: string; model_loaded: boolean }> {
    return this.request("GET", "/api/health");
  }
}
