// Turn payloads recorded verbatim from the live service.

import type { TurnTrace } from "../src/api.js";

export const QUERY_TURN: TurnTrace = {
  decision: "query",
  query: "copper facts",
  knowledge: "copper is deep and brittle",
  response: "copper is golden and early",
  timings: {
    rd_qg_ms: 2.2048399996492662,
    search_ms: 0.3274509999755537,
    rg_ms: 2.7560039998206776,
  },
  session_id: "3d772b3e68964e1cae081cdbe7712149",
};

export const NO_QUERY_TURN: TurnTrace = {
  decision: "no_query",
  query: null,
  knowledge: "",
  response: "hello how can i help you",
  timings: {
    rd_qg_ms: 1.4471599997705198,
    search_ms: 0.0,
    rg_ms: 2.862010999706399,
  },
  session_id: "a452d88e0e494c5094ea0e77b68c95e7",
};
