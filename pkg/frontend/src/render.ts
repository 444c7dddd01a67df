import type { ChatMessage, Condition, LessonDoc, QuestionView } from "./types.js";
import { ViewModel } from "./viewmodel.js";

const AGENT_NAMES: Record<string, string> = {
  learner: "You",
  ruffle: "Ruffle",
  riley: "Riley",
  system: "",
};

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
 * Build the split view for a condition:
 *   reading      lesson pane + finish button, no chat controls
 *   teacher_qa / llm_qa   lesson pane + answer box with a feedback region
 *   ruffle_riley lesson pane + dual-agent chat, send box, help button
 */
export function renderCondition(root: HTMLElement, condition: Condition): void {
  const doc = root.ownerDocument;
  root.innerHTML = "";
  root.dataset.condition = condition;

  const layout = el(doc, "div", "layout");
  const lessonPane = el(doc, "section", "lesson-pane");
  lessonPane.id = "lesson-pane";
  layout.appendChild(lessonPane);

  const side = el(doc, "section", "interaction-pane");
  side.id = "interaction-pane";

  if (condition === "reading") {
    const finish = el(doc, "button", "finish-button", "Finish reading");
    finish.id = "finish-button";
    side.appendChild(finish);
  } else {
    const transcript = el(doc, "div", "transcript");
    transcript.id = "transcript";
    side.appendChild(transcript);

    if (condition === "ruffle_riley") {
      const banner = el(doc, "div", "revision-banner hidden",
        "Riley asked you to revise your answer.");
      banner.id = "revision-banner";
      side.appendChild(banner);
    }

    const controls = el(doc, "div", "chat-controls");
    const input = el(doc, "textarea", "chat-input");
    input.id = "chat-input";
    input.setAttribute("placeholder",
      condition === "ruffle_riley" ? "Explain it to Ruffle..." : "Type your answer...");
    const send = el(doc, "button", "send-button",
      condition === "ruffle_riley" ? "Send" : "Submit answer");
    send.id = "send-button";
    controls.appendChild(input);
    controls.appendChild(send);
    side.appendChild(controls);

    if (condition === "ruffle_riley") {
      const help = el(doc, "button", "help-button", "Ask Riley for help");
      help.id = "help-button";
      side.appendChild(help);
    }
  }

  layout.appendChild(side);

  const closing = el(doc, "div", "closing-pane hidden");
  closing.id = "closing-pane";
  layout.appendChild(closing);

  root.appendChild(layout);
}

/** Lesson body rendered as sections; each section div carries its anchor id
 * so scroll telemetry and in-page navigation can find it. */
export function renderLesson(pane: HTMLElement, lesson: LessonDoc): void {
  const doc = pane.ownerDocument;
  pane.innerHTML = "";
  pane.appendChild(el(doc, "h1", "lesson-title", lesson.title));

  const nav = el(doc, "nav", "lesson-nav");
  for (const section of lesson.sections) {
    const link = el(doc, "a", "lesson-nav-link", section.heading);
    link.setAttribute("href", `#${section.anchor}`);
    nav.appendChild(link);
  }
  pane.appendChild(nav);

  // split the markdown body on the section markers emitted by the lesson format
  const parts = lesson.body.split(/^## /m).filter((part) => part.trim());
  for (const part of parts) {
    const lines = part.split("\n");
    const headingLine = lines[0];
    const match = headingLine.match(/\{#([^}]+)\}/);
    const section = el(doc, "section", "lesson-section");
    if (match) section.id = match[1];
    section.appendChild(el(doc, "h2", "section-heading",
      headingLine.replace(/\s*\{#[^}]+\}\s*/, "")));
    for (const paragraph of lines.slice(1).join("\n").split(/\n\n+/)) {
      if (paragraph.trim()) {
        section.appendChild(el(doc, "p", "lesson-paragraph", paragraph.trim()));
      }
    }
    pane.appendChild(section);
  }
}

/** Re-render the transcript list from the view model; messages appear in
 * turn_id order with a distinct visual identity per author. */
export function renderTranscript(container: HTMLElement, vm: ViewModel): void {
  const doc = container.ownerDocument;
  container.innerHTML = "";
  for (const message of vm.transcript) {
    const row = el(doc, "div", `message author-${message.author} cause-${message.cause}`);
    row.dataset.turnId = String(message.turn_id);
    const name = AGENT_NAMES[message.author];
    if (name) row.appendChild(el(doc, "span", "message-author", name));
    row.appendChild(el(doc, "span", "message-content", message.content));
    container.appendChild(row);
  }
  container.scrollTop = container.scrollHeight;
}

export function renderQuestionHeader(side: HTMLElement, question: QuestionView | null): void {
  const doc = side.ownerDocument;
  let header = side.querySelector<HTMLElement>("#question-header");
  if (!header) {
    header = el(doc, "div", "question-header");
    header.id = "question-header";
    side.prepend(header);
  }
  header.textContent = question
    ? `Question ${question.index + 1} of ${question.total}`
    : "";
}

/** Sync the enabled/disabled state of the inputs with the view model. */
export function syncControls(root: HTMLElement, vm: ViewModel): void {
  const send = root.querySelector<HTMLButtonElement>("#send-button");
  const input = root.querySelector<HTMLTextAreaElement>("#chat-input");
  const help = root.querySelector<HTMLButtonElement>("#help-button");
  const enabled = vm.canSend();
  if (send) send.disabled = !enabled;
  if (input) input.disabled = !enabled;
  if (help) help.disabled = !enabled;
  const banner = root.querySelector<HTMLElement>("#revision-banner");
  if (banner) banner.classList.toggle("hidden", !vm.needsRevision());
}

export function latestFeedback(vm: ViewModel): ChatMessage | null {
  for (let i = vm.transcript.length - 1; i >= 0; i--) {
    const message = vm.transcript[i];
    if (message.author === "system" &&
        (message.cause === "question_transition" || message.cause === "session_bookend")) {
      return message;
    }
  }
  return null;
}
