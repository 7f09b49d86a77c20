// Single-page chat UI. One active session per tab; the send button is
// disabled while a turn is in flight, mirroring the service's per-session
// serialization.

import { ApiClient, ApiError, resolveBaseUrl } from "./api.js";
import { MODES, type Mode, type SessionInfo } from "./types.js";
import { buildTurnView, type TurnView } from "./view.js";

const RATING_STATEMENTS = [
  "The responses were grounded in the shown facts.",
  "The responses were appropriate to the conversation.",
];

const ANNOTATION_FLAGS = ["hallucination", "retrieval_error"] as const;

interface AppState {
  session: SessionInfo | null;
  inFlight: boolean;
  // per-turn annotation checkboxes, keyed by turn index
  annotations: Map<number, Set<string>>;
  turnCount: number;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function renderTurn(
  view: TurnView,
  turnIndex: number,
  state: AppState,
): HTMLElement {
  const wrap = el("section", "turn");
  wrap.appendChild(el("p", "bubble user", view.userText));
  wrap.appendChild(el("p", "bubble system", view.systemText));

  const panel = el("div", "fact-panel");
  panel.appendChild(el("h4", undefined, "Facts"));
  if (view.emptyMessage !== null) {
    panel.appendChild(el("p", "empty", view.emptyMessage));
  } else {
    const list = el("ul", "facts");
    for (const fact of view.facts) {
      const item = el("li", fact.inPrompt ? "fact in-prompt" : "fact");
      item.appendChild(el("span", "prob", fact.probLabel));
      item.appendChild(el("span", "text", " " + fact.text));
      if (fact.derived) item.appendChild(el("span", "badge", "derived"));
      item.title = fact.sourceAtom;
      list.appendChild(item);
    }
    panel.appendChild(list);
  }
  if (view.links.length > 0) {
    const links = el("p", "links");
    links.textContent =
      "Links: " +
      view.links
        .map((l) => `${l.mention} → ${l.entity} (${l.probLabel})`)
        .join(", ");
    panel.appendChild(links);
  }
  if (view.timings.length > 0) {
    const timing = el("p", "timings");
    timing.textContent = view.timings
      .map((t) => `${t.stage} ${t.ms.toFixed(1)} ms`)
      .join(" · ");
    panel.appendChild(timing);
  }

  const flags = el("div", "annotations");
  for (const flag of ANNOTATION_FLAGS) {
    const label = el("label");
    const box = el("input") as HTMLInputElement;
    box.type = "checkbox";
    box.addEventListener("change", () => {
      let set = state.annotations.get(turnIndex);
      if (!set) {
        set = new Set();
        state.annotations.set(turnIndex, set);
      }
      box.checked ? set.add(flag) : set.delete(flag);
    });
    label.appendChild(box);
    label.appendChild(document.createTextNode(" " + flag.replace("_", " ")));
    flags.appendChild(label);
  }
  panel.appendChild(flags);
  wrap.appendChild(panel);
  return wrap;
}

function annotationPayload(state: AppState): Record<string, string[]> {
  const out: Record<string, string[]> = {};
  for (const [turn, flags] of state.annotations) {
    if (flags.size > 0) out[String(turn)] = [...flags].sort();
  }
  return out;
}

export function mountApp(root: HTMLElement): void {
  const api = new ApiClient(resolveBaseUrl(window.location.search));
  const state: AppState = {
    session: null,
    inFlight: false,
    annotations: new Map(),
    turnCount: 0,
  };

  root.innerHTML = `
    <header>
      <h1>factgraph chat</h1>
      <label>Mode <select id="mode"></select></label>
      <label>Seed <input id="seed" type="number" placeholder="random"></label>
      <button id="start">Start session</button>
      <span id="session-label"></span>
    </header>
    <div id="error" class="error" hidden>
      <span id="error-text"></span> <button id="retry">Retry</button>
    </div>
    <main id="conversation"></main>
    <form id="composer">
      <input id="utterance" placeholder="Say something…" autocomplete="off">
      <button id="send" type="submit" disabled>Send</button>
    </form>
    <footer id="wrapup" hidden>
      <h3>Rate this dialogue (1 = Never … 5 = Always)</h3>
      <div id="ratings"></div>
      <button id="submit-ratings">Submit ratings</button>
      <button id="download">Download transcript</button>
      <button id="end">End conversation</button>
    </footer>`;

  const $ = <T extends HTMLElement>(id: string) =>
    root.querySelector<T>("#" + id)!;
  const modeSelect = $<HTMLSelectElement>("mode");
  for (const mode of MODES) {
    const opt = el("option", undefined, mode);
    opt.value = mode;
    if (mode === "relevance_logic") opt.selected = true;
    modeSelect.appendChild(opt);
  }
  const ratingsBox = $<HTMLDivElement>("ratings");
  const ratingSelects: HTMLSelectElement[] = RATING_STATEMENTS.map((text) => {
    const row = el("label", "rating-row", text + " ");
    const select = el("select") as HTMLSelectElement;
    for (let score = 1; score <= 5; score++) {
      const opt = el("option", undefined, String(score));
      opt.value = String(score);
      select.appendChild(opt);
    }
    row.appendChild(select);
    ratingsBox.appendChild(row);
    return select;
  });

  let lastAction: (() => Promise<void>) | null = null;

  function showError(err: unknown): void {
    const message =
      err instanceof ApiError ? err.message : `unexpected error: ${err}`;
    $("error-text").textContent = message;
    $("error").hidden = false;
  }

  async function run(action: () => Promise<void>): Promise<void> {
    lastAction = action;
    $("error").hidden = true;
    try {
      await action();
    } catch (err) {
      showError(err);
    }
  }

  $("retry").addEventListener("click", () => {
    if (lastAction) void run(lastAction);
  });

  $("start").addEventListener("click", () =>
    run(async () => {
      const seedRaw = $<HTMLInputElement>("seed").value.trim();
      state.session = await api.createSession(
        modeSelect.value as Mode,
        seedRaw === "" ? undefined : Number(seedRaw),
      );
      state.annotations.clear();
      state.turnCount = 0;
      $("conversation").innerHTML = "";
      $("session-label").textContent =
        `session ${state.session.session_id.slice(0, 8)}… seed ${state.session.seed}`;
      $<HTMLButtonElement>("send").disabled = false;
      $("wrapup").hidden = false;
    }),
  );

  $<HTMLFormElement>("composer").addEventListener("submit", (event) => {
    event.preventDefault();
    const input = $<HTMLInputElement>("utterance");
    const text = input.value.trim();
    if (!text || !state.session || state.inFlight) return;
    void run(async () => {
      state.inFlight = true;
      const send = $<HTMLButtonElement>("send");
      send.disabled = true;
      try {
        const payload = await api.sendUtterance(state.session!.session_id, text);
        const view = buildTurnView(text, payload, state.session!.mode);
        $("conversation").appendChild(renderTurn(view, state.turnCount, state));
        state.turnCount += 1;
        input.value = "";
      } finally {
        state.inFlight = false;
        send.disabled = false;
      }
    });
  });

  $("submit-ratings").addEventListener("click", () =>
    run(async () => {
      if (!state.session) return;
      const annotations = annotationPayload(state);
      for (let i = 0; i < RATING_STATEMENTS.length; i++) {
        await api.submitRating(
          state.session.session_id,
          RATING_STATEMENTS[i],
          Number(ratingSelects[i].value),
          i === 0 ? annotations : undefined,
        );
      }
      $("error-text").textContent = "";
    }),
  );

  $("download").addEventListener("click", () =>
    run(async () => {
      if (!state.session) return;
      const transcript = await api.downloadTranscript(state.session.session_id);
      const blob = new Blob([JSON.stringify(transcript, null, 2)], {
        type: "application/json",
      });
      const anchor = el("a") as HTMLAnchorElement;
      anchor.href = URL.createObjectURL(blob);
      anchor.download = `transcript-${state.session.session_id}.json`;
      anchor.click();
      URL.revokeObjectURL(anchor.href);
    }),
  );

  $("end").addEventListener("click", () => {
    state.session = null;
    $<HTMLButtonElement>("send").disabled = true;
    $("session-label").textContent = "";
    $("wrapup").hidden = true;
  });
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  mountApp(document.getElementById("app")!);
}
