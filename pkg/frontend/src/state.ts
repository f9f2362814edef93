/**
 * Client-side session view state. This module never talks to the
 * network: it folds progress events and report snapshots into a view
 * model the DOM layer renders. Loss records are always kept (the
 * sparkline must equal the stream exactly); preview refreshes are
 * throttled and droppable.
 */

import type { ProgressEvent, SessionReport } from "./api.js";

export type SessionStatus = "idle" | "running" | "converged" | "failed";

export interface RoundCard {
  roundId: number;
  regionId: number | null;
  budget: number | null;
  status: "running" | "done" | "skipped";
  iterations: number | null;
  finalLoss: number | null;
}

export interface LossPoint {
  round: number;
  iteration: number;
  cleanLoss: number;
}

export const PREVIEW_MIN_INTERVAL_MS = 250; // 4 Hz cap

export class SessionState {
  sessionId: string;
  status: SessionStatus = "idle";
  rounds: RoundCard[] = [];
  losses: LossPoint[] = [];
  previewB64: string | null = null;
  streamConnected = false;
  lastError: string | null = null;
  private lastPreviewAt = Number.NEGATIVE_INFINITY;

  constructor(sessionId: string) {
    this.sessionId = sessionId;
  }

  get canRunRound(): boolean {
    return this.status !== "running";
  }

  /** Mark a round as started locally (after a 202 from the API). */
  beginRound(roundId: number, regionId: number): void {
    this.status = "running";
    this.lastError = null;
    this.rounds.push({
      roundId,
      regionId,
      budget: null,
      status: "running",
      iterations: null,
      finalLoss: null,
    });
    this.rounds.sort((a, b) => a.roundId - b.roundId);
  }

  /**
   * Fold one progress event in. Returns true when the preview image
   * changed (callers repaint only then).
   */
  applyEvent(ev: ProgressEvent, nowMs: number): boolean {
    if (ev.type === "loss") {
      // never dropped, never reordered
      this.losses.push({ round: ev.round, iteration: ev.iteration, cleanLoss: ev.clean_loss });
      return false;
    }
    if (ev.type === "preview") {
      if (nowMs - this.lastPreviewAt < PREVIEW_MIN_INTERVAL_MS) return false;
      this.lastPreviewAt = nowMs;
      this.previewB64 = ev.png_b64;
      return true;
    }
    // status event
    if (ev.status === "failed") {
      this.status = "failed";
      this.lastError = ev.error ?? "round failed";
    } else if (ev.status === "running") {
      this.status = "running";
    } else {
      this.status = ev.status === "converged" ? "converged" : "idle";
    }
    if (ev.round !== undefined) {
      const card = this.rounds.find((r) => r.roundId === ev.round);
      if (card) {
        card.status = "done";
        card.iterations = ev.iterations ?? card.iterations;
        card.finalLoss = ev.final_loss ?? card.finalLoss;
      }
    }
    return false;
  }

  /** Reconcile with the server's report (budgets, skipped rounds...). */
  applyReport(report: SessionReport): void {
    if (report.status === "running") this.status = "running";
    else if (report.status === "failed") this.status = "failed";
    else this.status = report.status === "converged" ? "converged" : "idle";
    for (const rep of report.rounds) {
      let card = this.rounds.find((r) => r.roundId === rep.round_id);
      if (!card) {
        card = {
          roundId: rep.round_id,
          regionId: rep.region_id,
          budget: rep.budget,
          status: "done",
          iterations: rep.iterations,
          finalLoss: rep.final_loss,
        };
        this.rounds.push(card);
      }
      card.regionId = rep.region_id;
      card.budget = rep.budget;
      card.iterations = rep.iterations;
      card.finalLoss = rep.final_loss;
      card.status = rep.skipped ? "skipped" : "done";
    }
    this.rounds.sort((a, b) => a.roundId - b.roundId);
  }

  /** The sparkline series: exactly the streamed clean losses, in order. */
  lossSeries(): number[] {
    return this.losses.map((p) => p.cleanLoss);
  }
}
