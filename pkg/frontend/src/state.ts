// Session view state and the controller that mutates it. The UI is
// stateless beyond this object: a reload that re-fetches the state doc
// reconstructs the identical view.

import { Api, ApiError, ManualPlan, StateDoc } from "./api.js";

export interface SelectedPlan {
  center: number[];      // world mm
  yaw: number;
  pitch: number;
}

export interface ViewState {
  sessionId: string | null;
  doc: StateDoc | null;
  orbit: { yaw: number; pitch: number; zoom: number };
  selected: SelectedPlan | null;
  showSuggestion: boolean;
  polling: "idle" | "active" | "error";
  lastError: string | null;
}

export function emptyView(): ViewState {
  return {
    sessionId: null,
    doc: null,
    orbit: { yaw: 0.6, pitch: 0.5, zoom: 1.0 },
    selected: null,
    showSuggestion: true,
    polling: "idle",
    lastError: null,
  };
}

export interface TouchOutcome {
  ok: boolean;
  error?: string;        // short error name for a toast
  detail?: string;
}

export class SessionController {
  view: ViewState = emptyView();

  constructor(private api: Api, private pollMs = 1000) {}

  async create(scene: unknown, prior = "default", seed?: number,
               revealTruth = false): Promise<void> {
    const doc = await this.api.createSession(scene, prior, seed, revealTruth);
    this.view = { ...emptyView(), sessionId: doc.id, doc, polling: "active" };
  }

  async refresh(): Promise<void> {
    if (!this.view.sessionId) return;
    try {
      this.view.doc = await this.api.getState(this.view.sessionId);
      this.view.polling = "active";
      this.view.lastError = null;
    } catch (err) {
      // never crash the session on a fetch failure; surface a banner
      this.view.polling = "error";
      this.view.lastError = err instanceof Error ? err.message : String(err);
    }
  }

  private async waitReady(): Promise<void> {
    while (this.view.doc && this.view.doc.state === "refining") {
      await new Promise((r) => setTimeout(r, this.pollMs));
      await this.refresh();
    }
  }

  async submitTouch(plan: "auto" | ManualPlan): Promise<TouchOutcome> {
    if (!this.view.sessionId) return { ok: false, error: "no-session" };
    try {
      this.view.doc = await this.api.postTouch(this.view.sessionId, plan);
      this.view.selected = null;    // cleared after submission
      await this.waitReady();
      return { ok: true };
    } catch (err) {
      if (err instanceof ApiError) {
        return { ok: false, error: err.errorName, detail: err.message };
      }
      return { ok: false, error: "network", detail: String(err) };
    }
  }

  async submitSelected(): Promise<TouchOutcome> {
    const sel = this.view.selected;
    if (!sel) return { ok: false, error: "no-plan" };
    return this.submitTouch({ center: sel.center, yaw: sel.yaw, pitch: sel.pitch });
  }

  selectPlan(center: number[], yaw: number, pitch: number): void {
    this.view.selected = { center, yaw, pitch };
  }

  // chart series straight from the server's cd history
  chartData(): { x: number[]; ySum: number[]; yNorm: number[] } {
    const hist = this.view.doc?.cd_history ?? [];
    return {
      x: hist.map((e) => e.touch_index),
      ySum: hist.map((e) => e.cd_sum),
      yNorm: hist.map((e) => e.cd_norm),
    };
  }
}

export function parseMetricsCsv(text: string):
    { touch_index: number; cd_sum: number; cd_norm: number }[] {
  const lines = text.trim().split("\n");
  const header = lines[0].split(",");
  const ti = header.indexOf("touch_index");
  const cs = header.indexOf("cd_sum");
  const cn = header.indexOf("cd_norm");
  return lines.slice(1).map((line) => {
    const parts = line.split(",");
    return {
      touch_index: parseInt(parts[ti], 10),
      cd_sum: parseFloat(parts[cs]),
      cd_norm: parseFloat(parts[cn]),
    };
  });
}
