import type { LessonDoc, SessionView, StreamFrame } from "./types.js";

async function asJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    const detail = await response.text();
    throw new Error(`HTTP ${response.status}: ${detail}`);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  constructor(private base: string = "") {}

  createSession(participantId: string, lessonId: string, condition?: string) {
    return fetch(`${this.base}/sessions`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        participant_id: participantId,
        lesson_id: lessonId,
        condition: condition ?? "auto",
      }),
    }).then((r) => asJson<{ session_id: string; condition: string }>(r));
  }

  getSession(sessionId: string) {
    return fetch(`${this.base}/sessions/${sessionId}`).then((r) => asJson<SessionView>(r));
  }

  getLesson(lessonId: string) {
    return fetch(`${this.base}/lessons/${lessonId}`).then((r) => asJson<LessonDoc>(r));
  }

  sendMessage(sessionId: string, text: string) {
    return fetch(`${this.base}/sessions/${sessionId}/messages`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ text }),
    }).then((r) => asJson<{ messages: unknown[]; phase: string }>(r));
  }

  requestHelp(sessionId: string) {
    return fetch(`${this.base}/sessions/${sessionId}/help`, { method: "POST" }).then((r) =>
      asJson<{ message: unknown; help_request_count: number }>(r),
    );
  }

  postScroll(sessionId: string, anchor: string, viewportFraction: number) {
    return fetch(`${this.base}/sessions/${sessionId}/events`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        kind: "scroll",
        payload: { anchor, viewport_fraction: viewportFraction },
      }),
    }).then((response) => {
      if (!response.ok) throw new Error(`HTTP ${response.status}`);
    });
  }

  submitPosttest(sessionId: string, answers: Record<string, number>) {
    return fetch(`${this.base}/sessions/${sessionId}/posttest`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ answers }),
    }).then((r) => asJson<{ phase: string }>(r));
  }

  submitSurvey(sessionId: string, responses: Record<string, number>) {
    return fetch(`${this.base}/sessions/${sessionId}/survey`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ responses }),
    }).then((r) => asJson<{ phase: string }>(r));
  }

  finish(sessionId: string) {
    return fetch(`${this.base}/sessions/${sessionId}/finish`, { method: "POST" }).then((r) =>
      asJson<{ phase: string }>(r),
    );
  }
}

export interface StreamHandle {
  close(): void;
}

/**
 * Reconnecting stream: after a drop it reopens with `after=<last turn_id>`
 * so no message is duplicated or lost on screen.
 */
export function connectStream(
  sessionId: string,
  onFrame: (frame: StreamFrame) => void,
  lastTurnId: () => number,
  makeSocket?: (url: string) => WebSocket,
): StreamHandle {
  let closed = false;
  let socket: WebSocket | null = null;

  const open = () => {
    if (closed) return;
    const protocol = location.protocol === "https:" ? "wss" : "ws";
    const url = `${protocol}://${location.host}/sessions/${sessionId}/stream?after=${lastTurnId()}`;
    socket = makeSocket ? makeSocket(url) : new WebSocket(url);
    socket.onmessage = (event) => onFrame(JSON.parse(event.data as string) as StreamFrame);
    socket.onclose = () => {
      if (!closed) setTimeout(open, 1000);
    };
  };

  open();
  return {
    close() {
      closed = true;
      socket?.close();
    },
  };
}
