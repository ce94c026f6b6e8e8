// Typed client for the session service. All numbers shown anywhere in the
// UI come from these responses; nothing is recomputed client-side.

export interface CdEntry {
  touch_index: number;
  cd_sum: number;
  cd_norm: number;
}

export interface GridDoc {
  dims: number[];
  full_dims: number[];
  factor: number;
  voxel_mm: number;
  origin_world: number[];
  vxg_b64: string;
}

export interface PlanDoc {
  corner: number[];
  k: number;
  score: number;
  center_world: number[];
  normal: number[];
  approach_start: number[];
  yaw: number;
  pitch: number;
  offset: number;
}

export interface TouchRecordDoc {
  index: number;
  cd_sum: number;
  cd_norm: number;
  ms: number;
  hit?: boolean;
  normal?: number[];
  contact_world?: number[];
}

export interface StateDoc {
  id: string;
  state: "ready" | "refining";
  policy: string;
  touches: number;
  scene: string;
  cd_history: CdEntry[];
  grid: GridDoc;
  records: TouchRecordDoc[];
  suggestion: PlanDoc | null;
  sensor: { k: number; yaw_choices: number[]; pitch_choices: number[] };
  truth_points?: number[][];
}

export interface ManualPlan {
  center: number[];
  yaw: number;
  pitch: number;
}

export class ApiError extends Error {
  constructor(public status: number, public errorName: string, detail: string) {
    super(detail);
  }
}

async function parseError(resp: Response): Promise<ApiError> {
  let name = `http-${resp.status}`;
  let detail = resp.statusText;
  try {
    const body = await resp.json();
    if (body.error) {
      name = body.error;
      detail = body.detail ?? detail;
    }
  } catch {
    /* non-JSON error body; keep the status text */
  }
  return new ApiError(resp.status, name, detail);
}

export class Api {
  constructor(private base: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await fetch(this.base + path, init);
    if (!resp.ok) throw await parseError(resp);
    return (await resp.json()) as T;
  }

  createSession(scene: unknown, prior = "default", seed?: number,
                revealTruth = false): Promise<StateDoc> {
    return this.request<StateDoc>("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        scene, prior, seed, reveal_truth: revealTruth,
      }),
    });
  }

  getState(id: string): Promise<StateDoc> {
    return this.request<StateDoc>(`/sessions/${id}`);
  }

  postTouch(id: string, plan: "auto" | ManualPlan): Promise<StateDoc> {
    return this.request<StateDoc>(`/sessions/${id}/touch`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ plan }),
    });
  }

  async getMetricsCsv(id: string): Promise<string> {
    const resp = await fetch(`${this.base}/sessions/${id}/metrics`);
    if (!resp.ok) throw await parseError(resp);
    return resp.text();
  }
}
