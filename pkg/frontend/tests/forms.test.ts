import { describe, expect, it } from "vitest";

import { renderPosttestForm, renderSurveyForm } from "../src/forms.js";
import type { PosttestItemView, SurveyView } from "../src/types.js";

const ITEMS: PosttestItemView[] = Array.from({ length: 7 }, (_, i) => ({
  item_id: `pt${i + 1}`,
  stem: `Question ${i + 1}?`,
  options: ["A", "B", "C", "D"],
}));

function pick(form: HTMLElement, name: string, value: number): void {
  const radio = form.querySelector<HTMLInputElement>(
    `input[name="${name}"][value="${value}"]`,
  )!;
  radio.checked = true;
  radio.dispatchEvent(new Event("change", { bubbles: true }));
}

describe("post-test form", () => {
  it("renders exactly the served items with one selection per item", () => {
    document.body.innerHTML = "";
    const host = document.createElement("div");
    document.body.appendChild(host);
    renderPosttestForm(host, ITEMS, () => undefined);
    expect(host.querySelectorAll(".posttest-item")).toHaveLength(7);
    for (const item of ITEMS) {
      expect(host.querySelectorAll(`input[name="${item.item_id}"]`)).toHaveLength(4);
    }
  });

  it("submit stays disabled until all items are answered, then submits 7 answers", () => {
    document.body.innerHTML = "";
    const host = document.createElement("div");
    document.body.appendChild(host);
    let submitted: Record<string, number> | null = null;
    renderPosttestForm(host, ITEMS, (answers) => {
      submitted = answers;
    });
    const submit = host.querySelector<HTMLButtonElement>("#submit-posttest")!;
    expect(submit.disabled).toBe(true);
    ITEMS.slice(0, 6).forEach((item, i) => pick(host, item.item_id, i % 4));
    expect(submit.disabled).toBe(true); // one item still open
    pick(host, ITEMS[6].item_id, 2);
    expect(submit.disabled).toBe(false);
    host.querySelector("form")!.dispatchEvent(new Event("submit", { bubbles: true }));
    expect(submitted).not.toBeNull();
    expect(Object.keys(submitted!)).toHaveLength(7);
    expect(submitted!.pt7).toBe(2);
  });
});

const SURVEY: SurveyView = {
  aspects: [
    { key: "engagement", prompt: "I felt engaged." },
    { key: "enjoyment", prompt: "I enjoyed it." },
  ],
  attention_checks: [
    { key: "attention_1", prompt: "Pick 7." },
    { key: "attention_2", prompt: "Pick 1." },
  ],
  lookup: { key: "lookup", prompt: "I looked up answers." },
  scale: { min: 1, max: 7 },
};

describe("survey form", () => {
  it("collects a response for every aspect, both checks, and the lookup item", () => {
    document.body.innerHTML = "";
    const host = document.createElement("div");
    document.body.appendChild(host);
    let submitted: Record<string, number> | null = null;
    renderSurveyForm(host, SURVEY, (responses) => {
      submitted = responses;
    });
    const submit = host.querySelector<HTMLButtonElement>("#submit-survey")!;
    expect(host.querySelectorAll(".survey-item")).toHaveLength(5);
    expect(submit.disabled).toBe(true);
    for (const key of ["engagement", "enjoyment", "attention_1", "attention_2", "lookup"]) {
      pick(host, key, key === "attention_1" ? 7 : 1);
    }
    expect(submit.disabled).toBe(false);
    host.querySelector("form")!.dispatchEvent(new Event("submit", { bubbles: true }));
    expect(submitted).toEqual({
      engagement: 1, enjoyment: 1, attention_1: 7, attention_2: 1, lookup: 1,
    });
  });
});
