import { describe, expect, it } from "vitest";

import { AnchorTelemetry } from "../src/scroll.js";

function harness(failures = 0) {
  const posted: Array<{ anchor: string; fraction: number }> = [];
  let remainingFailures = failures;
  let clock = 0;
  const telemetry = new AnchorTelemetry(
    async (anchor, fraction) => {
      if (remainingFailures > 0) {
        remainingFailures -= 1;
        throw new Error("network down");
      }
      posted.push({ anchor, fraction });
    },
    500,
    () => clock,
  );
  return {
    telemetry,
    posted,
    advance: (ms: number) => {
      clock += ms;
    },
  };
}

const settle = () => new Promise((resolve) => setTimeout(resolve, 0));

describe("scroll telemetry", () => {
  it("scrolling through three sections posts three distinct-anchor events", async () => {
    const { telemetry, posted, advance } = harness();
    for (const anchor of ["nucleus", "mitochondria", "ribosomes"]) {
      telemetry.anchorVisible(anchor, 1.0);
      advance(600);
    }
    await settle();
    expect(posted).toHaveLength(3);
    expect(new Set(posted.map((p) => p.anchor)).size).toBe(3);
  });

  it("no scrolling posts nothing", async () => {
    const { posted } = harness();
    await settle();
    expect(posted).toHaveLength(0);
  });

  it("rapid jitter around one anchor posts at most once per window", async () => {
    const { telemetry, posted, advance } = harness();
    for (let i = 0; i < 10; i++) {
      telemetry.anchorVisible("nucleus", 0.5);
      advance(40); // ten sightings inside 400ms
    }
    await settle();
    expect(posted).toHaveLength(1);
    advance(500);
    telemetry.anchorVisible("nucleus", 0.5);
    await settle();
    expect(posted).toHaveLength(2);
  });

  it("distinct anchors debounce independently", async () => {
    const { telemetry, posted } = harness();
    telemetry.anchorVisible("nucleus", 1.0);
    telemetry.anchorVisible("mitochondria", 1.0);
    await settle();
    expect(posted).toHaveLength(2);
  });

  it("a failed post retries once and succeeds", async () => {
    const { telemetry, posted } = harness(1);
    telemetry.anchorVisible("nucleus", 1.0);
    await settle();
    expect(posted).toHaveLength(1);
  });

  it("two failures drop the event silently", async () => {
    const { telemetry, posted } = harness(2);
    telemetry.anchorVisible("nucleus", 1.0);
    await settle();
    expect(posted).toHaveLength(0);
  });
});
