/**
 * DOM wiring for region-studio. All sketch-state mutations go through
 * ApiClient; this layer renders SessionState and forwards user intent.
 */

import { ApiClient, ApiError } from "./api.js";
import { rasterizePolygon, validateDraft, type Vertex } from "./polygon.js";
import { sparklinePoints } from "./sparkline.js";
import { SessionState } from "./state.js";

interface Ui {
  baseUrl: HTMLInputElement;
  photo: HTMLInputElement;
  strokes: HTMLInputElement;
  seed: HTMLInputElement;
  createBtn: HTMLButtonElement;
  photoCanvas: HTMLCanvasElement;
  regionLabel: HTMLInputElement;
  addRegionBtn: HTMLButtonElement;
  clearDraftBtn: HTMLButtonElement;
  regionList: HTMLUListElement;
  roundCards: HTMLDivElement;
  sparkline: HTMLCanvasElement;
  preview: HTMLImageElement;
  sketchPane: HTMLDivElement;
  statusLine: HTMLDivElement;
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

class RegionStudio {
  private ui: Ui;
  private api: ApiClient | null = null;
  private state: SessionState | null = null;
  private draft: Vertex[] = [];
  private photoImage: HTMLImageElement | null = null;
  private regions: { id: number; label: string }[] = [{ id: 0, label: "whole image" }];

  constructor(ui: Ui) {
    this.ui = ui;
    ui.createBtn.addEventListener("click", () => void this.createSession());
    ui.addRegionBtn.addEventListener("click", () => void this.submitDraft());
    ui.clearDraftBtn.addEventListener("click", () => {
      this.draft = [];
      this.paintPhoto();
    });
    ui.photoCanvas.addEventListener("click", (ev) => this.addVertex(ev));
    this.renderRegions();
    this.setStatus("load a photo and create a session");
  }

  private setStatus(text: string): void {
    this.ui.statusLine.textContent = text;
  }

  private async createSession(): Promise<void> {
    const file = this.ui.photo.files?.[0];
    if (!file) {
      this.setStatus("choose a photo first");
      return;
    }
    this.api = new ApiClient(this.ui.baseUrl.value);
    try {
      const sid = await this.api.createSession(file, {
        strokes: Number(this.ui.strokes.value) || 128,
        seed: Number(this.ui.seed.value) || 0,
      });
      this.state = new SessionState(sid);
      this.setStatus(`session ${sid.slice(0, 8)}… created`);
      await this.loadPhotoPreview(file);
      await this.refreshSketch();
    } catch (err) {
      this.setStatus(`session failed: ${(err as Error).message}`);
    }
  }

  private loadPhotoPreview(file: File): Promise<void> {
    return new Promise((resolve) => {
      const img = new Image();
      img.onload = () => {
        this.photoImage = img;
        this.paintPhoto();
        resolve();
      };
      img.src = URL.createObjectURL(file);
    });
  }

  private addVertex(ev: MouseEvent): void {
    if (!this.photoImage) return;
    const rect = this.ui.photoCanvas.getBoundingClientRect();
    const x = (ev.clientX - rect.left) / rect.width;
    const y = (ev.clientY - rect.top) / rect.height;
    this.draft.push([x, y]);
    this.paintPhoto();
  }

  private paintPhoto(): void {
    const canvas = this.ui.photoCanvas;
    const ctx = canvas.getContext("2d");
    if (!ctx || !this.photoImage) return;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    ctx.drawImage(this.photoImage, 0, 0, canvas.width, canvas.height);

    if (this.draft.length === 0) return;
    // translucent client-side mask preview, pixel-exact with the server
    if (this.draft.length >= 3 && validateDraft({ polygon: this.draft, label: "" }) === null) {
      const res = 112;
      const mask = rasterizePolygon(this.draft, res, res);
      const cell = canvas.width / res;
      ctx.fillStyle = "rgba(80, 160, 255, 0.35)";
      for (let r = 0; r < res; r++) {
        for (let c = 0; c < res; c++) {
          if (mask[r * res + c]) {
            ctx.fillRect(c * cell, r * (canvas.height / res), cell, canvas.height / res);
          }
        }
      }
    }
    ctx.strokeStyle = "#2266ff";
    ctx.lineWidth = 2;
    ctx.beginPath();
    this.draft.forEach(([x, y], i) => {
      const px = x * canvas.width;
      const py = y * canvas.height;
      if (i === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    });
    ctx.stroke();
    ctx.fillStyle = "#2266ff";
    for (const [x, y] of this.draft) {
      ctx.beginPath();
      ctx.arc(x * canvas.width, y * canvas.height, 3, 0, 2 * Math.PI);
      ctx.fill();
    }
  }

  private async submitDraft(): Promise<void> {
    if (!this.api || !this.state) {
      this.setStatus("create a session first");
      return;
    }
    const label = this.ui.regionLabel.value || `region ${this.regions.length}`;
    const error = validateDraft({ polygon: this.draft, label });
    if (error) {
      this.setStatus(`invalid region: ${error}`);
      return;
    }
    try {
      const regionId = await this.api.addPolygonRegion(this.state.sessionId, this.draft, label);
      this.regions.push({ id: regionId, label });
      this.draft = [];
      this.paintPhoto();
      this.renderRegions();
      this.setStatus(`region ${regionId} (“${label}”) added`);
    } catch (err) {
      this.setStatus(`region rejected: ${(err as Error).message}`);
    }
  }

  private renderRegions(): void {
    const list = this.ui.regionList;
    list.textContent = "";
    for (const region of this.regions) {
      const item = document.createElement("li");
      const btn = document.createElement("button");
      btn.textContent = `Run round on “${region.label}”`;
      btn.disabled = this.state !== null && !this.state.canRunRound;
      btn.addEventListener("click", () => void this.runRound(region.id));
      item.append(btn);
      list.append(item);
    }
  }

  private async runRound(regionId: number): Promise<void> {
    if (!this.api || !this.state) return;
    if (!this.state.canRunRound) {
      this.setStatus("round in progress");
      return;
    }
    try {
      const roundId = await this.api.startRound(this.state.sessionId, regionId);
      this.state.beginRound(roundId, regionId);
      this.renderRegions();
      this.renderCards();
      this.setStatus(`round ${roundId} running…`);
      await this.followProgress();
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.setStatus("round in progress");
      } else {
        this.setStatus(`round failed to start: ${(err as Error).message}`);
      }
    }
  }

  private async followProgress(): Promise<void> {
    if (!this.api || !this.state) return;
    this.state.streamConnected = true;
    try {
      for await (const ev of this.api.streamProgress(this.state.sessionId)) {
        const previewChanged = this.state.applyEvent(ev, performance.now());
        if (ev.type === "loss") this.renderSparkline();
        if (previewChanged && this.state.previewB64) {
          this.ui.preview.src = `data:image/png;base64,${this.state.previewB64}`;
        }
        if (ev.type === "status") {
          this.renderCards();
          this.renderRegions();
        }
      }
    } catch (err) {
      this.setStatus(`stream lost: ${(err as Error).message} — reconnect by rerunning`);
    } finally {
      this.state.streamConnected = false;
    }
    const report = await this.api.getReport(this.state.sessionId);
    this.state.applyReport(report);
    this.renderCards();
    this.renderRegions();
    await this.refreshSketch();
    this.setStatus(`status: ${this.state.status}`);
  }

  private renderSparkline(): void {
    if (!this.state) return;
    const canvas = this.ui.sparkline;
    const ctx = canvas.getContext("2d");
    if (!ctx) return;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    const pts = sparklinePoints(this.state.lossSeries(), canvas.width, canvas.height - 4);
    if (pts.length === 0) return;
    ctx.strokeStyle = "#cc3344";
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    pts.forEach((p, i) => {
      if (i === 0) ctx.moveTo(p.x, p.y + 2);
      else ctx.lineTo(p.x, p.y + 2);
    });
    ctx.stroke();
  }

  private renderCards(): void {
    if (!this.state) return;
    const host = this.ui.roundCards;
    host.textContent = "";
    for (const card of this.state.rounds) {
      const div = document.createElement("div");
      div.className = `round-card ${card.status}`;
      const loss = card.finalLoss === null ? "—" : card.finalLoss.toExponential(3);
      const iters = card.iterations === null ? "…" : String(card.iterations);
      const budget = card.budget === null ? "?" : String(card.budget);
      div.textContent =
        `round ${card.roundId} · region ${card.regionId ?? "?"} · ` +
        `${budget} strokes · ${iters} iters · loss ${loss} · ${card.status}`;
      host.append(div);
    }
  }

  private async refreshSketch(): Promise<void> {
    if (!this.api || !this.state) return;
    try {
      const svg = await this.api.fetchSketchSvg(this.state.sessionId);
      this.ui.sketchPane.innerHTML = svg;
    } catch (err) {
      this.setStatus(`sketch fetch failed: ${(err as Error).message}`);
    }
  }
}

export function mount(): void {
  new RegionStudio({
    baseUrl: el("base-url"),
    photo: el("photo-file"),
    strokes: el("strokes"),
    seed: el("seed"),
    createBtn: el("create-session"),
    photoCanvas: el("photo-canvas"),
    regionLabel: el("region-label"),
    addRegionBtn: el("add-region"),
    clearDraftBtn: el("clear-draft"),
    regionList: el("region-list"),
    roundCards: el("round-cards"),
    sparkline: el("sparkline"),
    preview: el("preview"),
    sketchPane: el("sketch-pane"),
    statusLine: el("status-line"),
  });
}

if (typeof document !== "undefined" && document.getElementById("region-studio-root")) {
  mount();
}
