import { describe, expect, it } from "vitest";

import { renderCondition, renderTranscript } from "../src/render.js";
import type { ChatMessage } from "../src/types.js";
import { ViewModel } from "../src/viewmodel.js";

const msg = (turn: number, author: ChatMessage["author"], cause: string): ChatMessage => ({
  turn_id: turn,
  author,
  content: `content-${turn}`,
  cause,
  timestamp: 1000 + turn,
});

describe("message ordering", () => {
  it("on-screen order equals event-log order even when frames arrive shuffled", () => {
    const vm = new ViewModel("ruffle_riley");
    // a help exchange: riley's reply (turn 2) precedes ruffle's follow-up (turn 3)
    const logOrder = [
      msg(0, "system", "session_bookend"),
      msg(1, "ruffle", "question_transition"),
      msg(2, "riley", "help_request"),
      msg(3, "learner", "learner_input"),
      msg(4, "ruffle", "coverage_followup"),
    ];
    // stream delivers late, REST snapshot races ahead: apply out of order
    for (const m of [logOrder[3], logOrder[0], logOrder[4], logOrder[2], logOrder[1]]) {
      vm.applyMessage(m);
    }
    const el = document.createElement("div");
    document.body.appendChild(el);
    renderCondition(el, "ruffle_riley");
    renderTranscript(el.querySelector("#transcript")!, vm);
    const turns = [...el.querySelectorAll(".message")].map((node) =>
      Number((node as HTMLElement).dataset.turnId),
    );
    expect(turns).toEqual([0, 1, 2, 3, 4]);
    const authors = [...el.querySelectorAll(".message")].map((node) =>
      (node as HTMLElement).className.match(/author-(\w+)/)![1],
    );
    expect(authors.indexOf("riley")).toBeLessThan(authors.lastIndexOf("ruffle"));
  });

  it("duplicate frames (REST + stream race) are applied once", () => {
    const vm = new ViewModel("ruffle_riley");
    const m = msg(0, "ruffle", "question_transition");
    expect(vm.applyMessage(m)).toBe(true);
    expect(vm.applyMessage(m)).toBe(false);
    expect(vm.transcript).toHaveLength(1);
  });

  it("help count follows riley help messages", () => {
    const vm = new ViewModel("ruffle_riley");
    vm.applyMessage(msg(0, "riley", "help_request"));
    vm.applyMessage(msg(1, "riley", "misconception_flag"));
    vm.applyMessage(msg(2, "riley", "help_request"));
    expect(vm.helpRequestCount).toBe(2);
  });
});
