// Pure view-model layer: turns a service turn payload into exactly what the
// panel renders. Facts keep the service-provided order — relevance ranking
// happens server-side and the client must not reorder it.

import type { Mode, TurnPayload } from "./types.js";

export interface FactRow {
  id: string;
  text: string;
  probLabel: string;
  derived: boolean;
  inPrompt: boolean;
  sourceAtom: string;
}

export interface LinkRow {
  mention: string;
  entity: string;
  probLabel: string;
}

export interface TurnView {
  userText: string;
  systemText: string;
  facts: FactRow[];
  links: LinkRow[];
  timings: Array<{ stage: string; ms: number }>;
  /** Shown in place of the fact list when it is empty. */
  emptyMessage: string | null;
}

export function formatProb(prob: number): string {
  return prob.toFixed(3);
}

export function buildTurnView(
  userText: string,
  payload: TurnPayload,
  mode: Mode,
): TurnView {
  const facts: FactRow[] = payload.facts.map((f) => ({
    id: f.id,
    text: f.text,
    probLabel: formatProb(f.prob),
    derived: f.derived,
    inPrompt: f.in_prompt,
    sourceAtom: f.source_atom,
  }));
  const links: LinkRow[] = payload.links.map((l) => ({
    mention: l.mention,
    entity: l.entity,
    probLabel: formatProb(l.prob),
  }));
  const timings = Object.entries(payload.timing_ms ?? {}).map(
    ([stage, ms]) => ({ stage, ms }),
  );
  return {
    userText,
    systemText: payload.response,
    facts,
    links,
    timings,
    emptyMessage:
      facts.length > 0
        ? null
        : mode === "nofacts"
          ? "no facts used"
          : "no facts matched this turn",
  };
}
