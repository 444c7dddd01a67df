import type { PosttestItemView, SurveyView } from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

/**
 * Post-test form: exactly the served items, one radio group per item, and
 * the submit button stays disabled until every item has a selection. The
 * lesson pane is hidden while the test is on screen (no back-navigation).
 */
export function renderPosttestForm(
  container: HTMLElement,
  items: PosttestItemView[],
  onSubmit: (answers: Record<string, number>) => void,
): void {
  const doc = container.ownerDocument;
  container.innerHTML = "";
  const form = el(doc, "form", "posttest-form");
  form.id = "posttest-form";
  form.appendChild(el(doc, "h2", "form-title", "Quiz"));

  for (const item of items) {
    const block = el(doc, "fieldset", "posttest-item");
    block.dataset.itemId = item.item_id;
    block.appendChild(el(doc, "legend", "item-stem", item.stem));
    item.options.forEach((option, index) => {
      const label = el(doc, "label", "option-label");
      const radio = el(doc, "input") as HTMLInputElement;
      radio.type = "radio";
      radio.name = item.item_id;
      radio.value = String(index);
      label.appendChild(radio);
      label.appendChild(doc.createTextNode(option));
      block.appendChild(label);
    });
    form.appendChild(block);
  }

  const submit = el(doc, "button", "submit-posttest", "Submit answers");
  submit.id = "submit-posttest";
  submit.type = "submit";
  submit.disabled = true;
  form.appendChild(submit);

  const collect = (): Record<string, number> | null => {
    const answers: Record<string, number> = {};
    for (const item of items) {
      const chosen = form.querySelector<HTMLInputElement>(
        `input[name="${item.item_id}"]:checked`,
      );
      if (!chosen) return null;
      answers[item.item_id] = Number(chosen.value);
    }
    return answers;
  };

  form.addEventListener("change", () => {
    submit.disabled = collect() === null;
  });
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const answers = collect();
    if (answers) onSubmit(answers);
  });

  container.appendChild(form);
}

/** Likert survey: every aspect, both attention checks, and the lookup item. */
export function renderSurveyForm(
  container: HTMLElement,
  survey: SurveyView,
  onSubmit: (responses: Record<string, number>) => void,
): void {
  const doc = container.ownerDocument;
  container.innerHTML = "";
  const form = el(doc, "form", "survey-form");
  form.id = "survey-form";
  form.appendChild(el(doc, "h2", "form-title", "About your experience"));

  const items = [...survey.aspects, ...survey.attention_checks, survey.lookup];
  for (const item of items) {
    const block = el(doc, "fieldset", "survey-item");
    block.dataset.key = item.key;
    block.appendChild(el(doc, "legend", "item-stem", item.prompt));
    for (let value = survey.scale.min; value <= survey.scale.max; value++) {
      const label = el(doc, "label", "option-label");
      const radio = el(doc, "input") as HTMLInputElement;
      radio.type = "radio";
      radio.name = item.key;
      radio.value = String(value);
      label.appendChild(radio);
      label.appendChild(doc.createTextNode(String(value)));
      block.appendChild(label);
    }
    form.appendChild(block);
  }

  const submit = el(doc, "button", "submit-survey", "Submit survey");
  submit.id = "submit-survey";
  submit.type = "submit";
  submit.disabled = true;
  form.appendChild(submit);

  const collect = (): Record<string, number> | null => {
    const responses: Record<string, number> = {};
    for (const item of items) {
      const chosen = form.querySelector<HTMLInputElement>(
        `input[name="${item.key}"]:checked`,
      );
      if (!chosen) return null;
      responses[item.key] = Number(chosen.value);
    }
    return responses;
  };

  form.addEventListener("change", () => {
    submit.disabled = collect() === null;
  });
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const responses = collect();
    if (responses) onSubmit(responses);
  });

  container.appendChild(form);
}
