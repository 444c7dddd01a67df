import { ApiClient, connectStream, type StreamHandle } from "./api.js";
import { renderPosttestForm, renderSurveyForm } from "./forms.js";
import {
  latestFeedback,
  renderCondition,
  renderLesson,
  renderQuestionHeader,
  renderTranscript,
  syncControls,
} from "./render.js";
import { AnchorTelemetry, observeAnchors } from "./scroll.js";
import type { Condition, SessionView, StreamFrame } from "./types.js";
import { ViewModel } from "./viewmodel.js";

const LESSON_ID = "cell-organelles-mini";

async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) return;
  const params = new URLSearchParams(location.search);
  const participant = params.get("participant") ?? `web-${Date.now()}`;
  const requested = params.get("condition") ?? "auto";

  const api = new ApiClient("");
  const created = await api.createSession(participant, LESSON_ID, requested);
  const sessionId = created.session_id;
  const condition = created.condition as Condition;

  const vm = new ViewModel(condition);
  renderCondition(root, condition);

  const lessonPane = root.querySelector<HTMLElement>("#lesson-pane")!;
  const side = root.querySelector<HTMLElement>("#interaction-pane")!;
  const closing = root.querySelector<HTMLElement>("#closing-pane")!;
  const transcriptEl = root.querySelector<HTMLElement>("#transcript");

  const lesson = await api.getLesson(LESSON_ID);
  renderLesson(lessonPane, lesson);
  const telemetry = new AnchorTelemetry((anchor, fraction) =>
    api.postScroll(sessionId, anchor, fraction),
  );
  const teardownScroll = observeAnchors(
    lessonPane,
    lesson.sections.map((section) => section.anchor),
    telemetry,
  );

  let stream: StreamHandle | null = null;

  const refreshClosingPane = async () => {
    const view = await api.getSession(sessionId);
    if (view.phase === "posttest" && view.posttest) {
      lessonPane.classList.add("hidden"); // no lesson during the test
      side.classList.add("hidden");
      closing.classList.remove("hidden");
      renderPosttestForm(closing, view.posttest.items, async (answers) => {
        await api.submitPosttest(sessionId, answers);
        await refreshClosingPane();
      });
    } else if (view.phase === "survey" && view.survey) {
      closing.classList.remove("hidden");
      renderSurveyForm(closing, view.survey, async (responses) => {
        await api.submitSurvey(sessionId, responses);
        await api.finish(sessionId);
        await refreshClosingPane();
      });
    } else if (view.phase === "done") {
      stream?.close();
      teardownScroll();
      closing.classList.remove("hidden");
      closing.innerHTML = "<h2>All done - thank you for participating!</h2>";
    }
  };

  const repaint = () => {
    if (transcriptEl) renderTranscript(transcriptEl, vm);
    syncControls(root, vm);
    if (condition === "teacher_qa" || condition === "llm_qa") {
      const feedback = latestFeedback(vm);
      if (feedback) {
        let region = side.querySelector<HTMLElement>("#feedback-region");
        if (!region) {
          region = document.createElement("div");
          region.id = "feedback-region";
          region.className = "feedback-region";
          side.insertBefore(region, side.querySelector(".chat-controls"));
        }
        region.textContent = feedback.content;
      }
    }
  };

  const onFrame = (frame: StreamFrame) => {
    if (frame.type === "message") {
      vm.applyMessage(frame.message);
    } else {
      vm.applyPhase(frame.phase);
      if (frame.phase === "posttest" || frame.phase === "survey" || frame.phase === "done") {
        void refreshClosingPane();
      }
    }
    repaint();
  };

  const view: SessionView = await api.getSession(sessionId);
  for (const message of view.transcript) vm.applyMessage(message);
  vm.applyPhase(view.phase);
  repaint();
  renderQuestionHeader(side, view.current_question);

  stream = connectStream(sessionId, onFrame, () => vm.lastTurnId());

  const input = root.querySelector<HTMLTextAreaElement>("#chat-input");
  const send = root.querySelector<HTMLButtonElement>("#send-button");
  const help = root.querySelector<HTMLButtonElement>("#help-button");
  const finishButton = root.querySelector<HTMLButtonElement>("#finish-button");

  send?.addEventListener("click", async () => {
    if (!input || !vm.canSend() || !input.value.trim()) return;
    const text = input.value;
    input.value = "";
    vm.pending = true;
    repaint();
    try {
      await api.sendMessage(sessionId, text);
      const fresh = await api.getSession(sessionId);
      for (const message of fresh.transcript) vm.applyMessage(message);
      vm.applyPhase(fresh.phase);
      renderQuestionHeader(side, fresh.current_question);
    } finally {
      vm.pending = false;
      repaint();
      void refreshClosingPane();
    }
  });

  help?.addEventListener("click", async () => {
    if (!vm.canSend()) return;
    vm.pending = true;
    repaint();
    try {
      await api.requestHelp(sessionId);
      const fresh = await api.getSession(sessionId);
      for (const message of fresh.transcript) vm.applyMessage(message);
    } finally {
      vm.pending = false;
      repaint();
    }
  });

  finishButton?.addEventListener("click", async () => {
    await api.finish(sessionId);
    await refreshClosingPane();
  });
}

void boot();
