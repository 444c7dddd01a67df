/**
 * Scroll telemetry: posts an event when a lesson section anchor enters the
 * viewport, at most one event per anchor per debounce window. Posting is
 * best-effort: one retry, then the event is dropped.
 */

export type ScrollPoster = (anchor: string, viewportFraction: number) => Promise<void>;

export const DEBOUNCE_MS = 500;

export class AnchorTelemetry {
  private lastPosted = new Map<string, number>();

  constructor(
    private post: ScrollPoster,
    private debounceMs: number = DEBOUNCE_MS,
    private now: () => number = () => Date.now(),
  ) {}

  /** Feed one anchor-visibility observation; returns true when a post fires. */
  anchorVisible(anchor: string, viewportFraction: number): boolean {
    const at = this.now();
    const last = this.lastPosted.get(anchor);
    if (last !== undefined && at - last < this.debounceMs) {
      return false;
    }
    this.lastPosted.set(anchor, at);
    void this.post(anchor, viewportFraction).catch(() =>
      this.post(anchor, viewportFraction).catch(() => {
        /* telemetry is best-effort: drop after one retry */
      }),
    );
    return true;
  }
}

/**
 * Wire an IntersectionObserver over every element carrying a section
 * anchor id. Returns a teardown function.
 */
export function observeAnchors(
  root: ParentNode,
  anchors: string[],
  telemetry: AnchorTelemetry,
): () => void {
  if (typeof IntersectionObserver === "undefined") {
    return () => undefined;
  }
  const observer = new IntersectionObserver(
    (entries) => {
      for (const entry of entries) {
        if (entry.isIntersecting) {
          telemetry.anchorVisible((entry.target as HTMLElement).id, entry.intersectionRatio);
        }
      }
    },
    { threshold: [0.25] },
  );
  for (const anchor of anchors) {
    const element = root.querySelector(`#${CSS.escape(anchor)}`);
    if (element) observer.observe(element);
  }
  return () => observer.disconnect();
}
