// Wire types for the /v1 session API. These mirror the service payloads
// exactly; the client never invents or drops fields.

export type Mode = "nofacts" | "allfacts" | "relevance" | "relevance_logic";

export const MODES: Mode[] = [
  "nofacts",
  "allfacts",
  "relevance",
  "relevance_logic",
];

export interface SessionInfo {
  session_id: string;
  mode: Mode;
  seed: number;
}

export interface FactPayload {
  id: string;
  text: string;
  prob: number;
  source_atom: string;
  derived: boolean;
  in_prompt: boolean;
}

export interface LinkPayload {
  mention: string;
  entity: string;
  prob: number;
}

export interface TurnPayload {
  response: string;
  facts: FactPayload[];
  links: LinkPayload[];
  timing_ms?: Record<string, number>;
}

export interface RatingRecord {
  session_id: string;
  statement: string;
  score: number;
  annotations?: Record<string, unknown>;
}

export interface Transcript {
  session_id: string;
  mode: Mode;
  seed: number;
  turns: Array<TurnPayload & { utterance: string }>;
  ratings: RatingRecord[];
}
