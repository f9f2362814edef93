import { describe, expect, it, vi } from "vitest";

import type { ProgressEvent, SessionReport } from "../src/api.js";
import { sparklinePoints } from "../src/sparkline.js";
import { PREVIEW_MIN_INTERVAL_MS, SessionState } from "../src/state.js";

function lossEvent(iteration: number, loss: number, round = 0): ProgressEvent {
  return { type: "loss", round, iteration, clean_loss: loss };
}

describe("SessionState", () => {
  it("disables run-round while a round is running", () => {
    const s = new SessionState("abc");
    expect(s.canRunRound).toBe(true);
    s.beginRound(0, 0);
    expect(s.status).toBe("running");
    expect(s.canRunRound).toBe(false);
    s.applyEvent({ type: "status", status: "idle", round: 0, iterations: 40 }, 0);
    expect(s.canRunRound).toBe(true);
  });

  it("keeps every loss record in stream order", () => {
    const s = new SessionState("abc");
    s.beginRound(0, 0);
    const values = [0.9, 0.5, 0.31, 0.3, 0.299];
    values.forEach((v, i) => s.applyEvent(lossEvent(i * 10, v), i));
    expect(s.lossSeries()).toEqual(values);
  });

  it("sparkline equals the progress stream exactly", () => {
    const s = new SessionState("abc");
    const values = [1.0, 0.4, 0.7, 0.2, 0.1, 0.05];
    values.forEach((v, i) => s.applyEvent(lossEvent(i, v), i));
    const pts = sparklinePoints(s.lossSeries(), 100, 50);
    expect(pts.length).toBe(values.length);
    // order-preserving and monotone in x
    for (let i = 1; i < pts.length; i++) {
      expect(pts[i].x).toBeGreaterThan(pts[i - 1].x);
    }
    // min and max map to the box edges
    const ys = pts.map((p) => p.y);
    expect(Math.min(...ys)).toBeCloseTo(0, 9);
    expect(Math.max(...ys)).toBeCloseTo(50, 9);
  });

  it("throttles previews to 4 Hz but never drops losses", () => {
    const s = new SessionState("abc");
    s.beginRound(0, 0);
    let previews = 0;
    for (let i = 0; i < 100; i++) {
      const t = i * 20; // 50 Hz of events
      if (s.applyEvent({ type: "preview", round: 0, iteration: i, png_b64: `p${i}` }, t)) {
        previews++;
      }
      s.applyEvent(lossEvent(i, 1 / (i + 1)), t);
    }
    expect(s.lossSeries().length).toBe(100);
    // actual 2s span at a 250 ms floor: no more than 9 repaints
    expect(previews).toBeLessThanOrEqual(Math.ceil(2000 / PREVIEW_MIN_INTERVAL_MS) + 1);
    expect(previews).toBeGreaterThan(0);
  });

  it("marks failures and keeps the error", () => {
    const s = new SessionState("abc");
    s.beginRound(0, 0);
    s.applyEvent({ type: "status", status: "failed", error: "loss backend down" }, 0);
    expect(s.status).toBe("failed");
    expect(s.lastError).toContain("loss backend");
  });

  it("reconciles cards with the report, ordered by round", () => {
    const s = new SessionState("abc");
    const report: SessionReport = {
      session_id: "abc",
      status: "idle",
      config: {},
      strokes_total: 24,
      regions: [0, 1],
      rounds: [
        {
          round_id: 1, region_id: 1, budget: 8, iterations: 20,
          initial_loss: 0.4, final_loss: 0.2, converged: true,
          skipped: false, loss_history: [[0, 0.4], [20, 0.2]],
        },
        {
          round_id: 0, region_id: 0, budget: 16, iterations: 30,
          initial_loss: 0.9, final_loss: 0.5, converged: false,
          skipped: false, loss_history: [[0, 0.9], [30, 0.5]],
        },
      ],
    };
    s.applyReport(report);
    expect(s.rounds.map((r) => r.roundId)).toEqual([0, 1]);
    expect(s.rounds[0].budget).toBe(16);
    expect(s.rounds[1].finalLoss).toBeCloseTo(0.2, 12);
  });

  it("never touches the network", () => {
    const spy = vi.fn();
    vi.stubGlobal("fetch", spy);
    const s = new SessionState("abc");
    s.beginRound(0, 0);
    for (let i = 0; i < 10; i++) s.applyEvent(lossEvent(i, 1 - i / 10), i);
    s.applyEvent({ type: "status", status: "idle", round: 0 }, 11);
    s.applyReport({
      session_id: "abc", status: "idle", config: {}, strokes_total: 0,
      regions: [0], rounds: [],
    });
    expect(spy).not.toHaveBeenCalled();
    vi.unstubAllGlobals();
  });
});
