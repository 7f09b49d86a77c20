import { describe, expect, it } from "vitest";

import type { TurnPayload } from "../src/types";
import { buildTurnView, formatProb } from "../src/view";

const payload: TurnPayload = {
  response: "Here is what I found: Jill Martinez attends the Budget review.",
  facts: [
    {
      id: "attending_today(e_1,p_1)",
      text: "Jill Martinez attends the Budget review today.",
      prob: 1.0,
      source_atom: "attending_today(e_1,p_1)",
      derived: true,
      in_prompt: true,
    },
    {
      id: "person(p_1)",
      text: "Jill Martinez is a person.",
      prob: 0.924521376,
      source_atom: "person(p_1)",
      derived: false,
      in_prompt: false,
    },
  ],
  links: [{ mention: "m_1", entity: "p_1", prob: 0.92452 }],
  timing_ms: { linking: 1.5, generate: 0.2 },
};

describe("buildTurnView", () => {
  it("mirrors the payload without reordering facts", () => {
    const view = buildTurnView("What events do I have today?", payload, "relevance_logic");
    expect(view.userText).toBe("What events do I have today?");
    expect(view.systemText).toBe(payload.response);
    expect(view.facts.map((f) => f.id)).toEqual([
      "attending_today(e_1,p_1)",
      "person(p_1)",
    ]);
    expect(view.emptyMessage).toBeNull();
  });

  it("carries derived and in-prompt flags through", () => {
    const view = buildTurnView("q", payload, "relevance_logic");
    expect(view.facts[0].derived).toBe(true);
    expect(view.facts[0].inPrompt).toBe(true);
    expect(view.facts[1].derived).toBe(false);
    expect(view.facts[1].inPrompt).toBe(false);
  });

  it("formats probabilities to three decimals", () => {
    expect(formatProb(0.924521376)).toBe("0.925");
    const view = buildTurnView("q", payload, "relevance_logic");
    expect(view.facts[1].probLabel).toBe("0.925");
    expect(view.links[0].probLabel).toBe("0.925");
  });

  it("shows 'no facts used' for an empty nofacts turn", () => {
    const view = buildTurnView(
      "hi",
      { response: "Hello!", facts: [], links: [] },
      "nofacts",
    );
    expect(view.emptyMessage).toBe("no facts used");
  });

  it("distinguishes an empty panel outside nofacts mode", () => {
    const view = buildTurnView(
      "hi",
      { response: "Hello!", facts: [], links: [] },
      "relevance",
    );
    expect(view.emptyMessage).toBe("no facts matched this turn");
  });

  it("tolerates a payload without timings", () => {
    const view = buildTurnView(
      "hi",
      { response: "ok", facts: [], links: [] },
      "relevance",
    );
    expect(view.timings).toEqual([]);
  });
});
