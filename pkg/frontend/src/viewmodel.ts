import type { ChatMessage, Condition, Phase } from "./types.js";

/**
 * Client-side session state. Messages are kept sorted by turn_id so the
 * on-screen order always equals the event-log order, no matter how frames
 * arrive (REST response vs. stream push can race on reconnect).
 */
export class ViewModel {
  condition: Condition;
  phase: Phase;
  transcript: ChatMessage[] = [];
  helpRequestCount = 0;
  /** true while a request is in flight; the send control mirrors this */
  pending = false;

  private seen = new Set<number>();

  constructor(condition: Condition, phase: Phase = "active") {
    this.condition = condition;
    this.phase = phase;
  }

  applyMessage(message: ChatMessage): boolean {
    if (this.seen.has(message.turn_id)) return false;
    this.seen.add(message.turn_id);
    this.transcript.push(message);
    this.transcript.sort((a, b) => a.turn_id - b.turn_id);
    if (message.author === "riley" && message.cause === "help_request") {
      this.helpRequestCount += 1;
    }
    return true;
  }

  applyPhase(phase: Phase): void {
    this.phase = phase;
  }

  lastTurnId(): number {
    return this.transcript.length
      ? this.transcript[this.transcript.length - 1].turn_id
      : -1;
  }

  /** Send control is enabled exactly when no turn is in flight and the
   * conversation phase accepts input. */
  canSend(): boolean {
    return !this.pending && (this.phase === "active" || this.phase === "awaiting_revision");
  }

  /** The revision banner tracks the phase itself: a help reply from Riley
   * may land after the flag without lifting the revision request. */
  needsRevision(): boolean {
    return this.phase === "awaiting_revision";
  }
}
