// Integration against the live service: the controller drives a whole
// human-baseline episode headlessly and the chart/metrics must agree.

import { describe, expect, inject, it } from "vitest";

import { Api, ManualPlan } from "../src/api.js";
import { gridWorldCells } from "../src/render.js";
import { SessionController, parseMetricsCsv } from "../src/state.js";

const SCENE = {
  resolution: 24,
  voxel_mm: 3.0,
  camera: { height_mm: 457.2, tilt_deg: 30, res: [64, 48] },
  sensor: { w_mm: 19, h_mm: 14, res: [64, 48], k_voxels: 4 },
  shape: {
    family: "bottle",
    params: { body_radius: 0.42, neck_ratio: 0.45, half_height: 0.58,
              shoulder: 0.4 },
  },
  noise: { depth_sigma_mm: 0.0, transparent: false },
  seed: 3,
};

function makeController(): SessionController {
  const api = new Api(inject("baseUrl") as string);
  return new SessionController(api, 50);
}

describe("session lifecycle", () => {
  it("creates a session and exposes one chart point", async () => {
    const ctl = makeController();
    await ctl.create(SCENE, "default", 11);
    const doc = ctl.view.doc!;
    expect(doc.touches).toBe(0);
    expect(doc.cd_history.length).toBe(1);
    expect(ctl.chartData().x).toEqual([0]);
    const cells = gridWorldCells(doc);
    expect(cells.length).toBeGreaterThan(0);
  });

  it("rejects an unknown prior with a clean error", async () => {
    const ctl = makeController();
    await expect(ctl.create(SCENE, "missing")).rejects.toThrow(/prior/i);
  });

  it("surfaces a blocked or bad manual plan as a toastable outcome", async () => {
    const ctl = makeController();
    await ctl.create(SCENE, "default", 12);
    const before = ctl.view.doc!.cd_history.length;
    // far outside the volume: the server rejects it without touching
    const plan: ManualPlan = { center: [9999, 9999, 9999], yaw: 0, pitch: 0 };
    const outcome = await ctl.submitTouch(plan);
    expect(outcome.ok).toBe(false);
    await ctl.refresh();
    expect(ctl.view.doc!.cd_history.length).toBe(before);
  });

  it("keeps the selected plan cleared after submission", async () => {
    const ctl = makeController();
    await ctl.create(SCENE, "default", 13);
    const sug = ctl.view.doc!.suggestion!;
    ctl.selectPlan(sug.center_world, sug.yaw, sug.pitch);
    expect(ctl.view.selected).not.toBeNull();
    const outcome = await ctl.submitSelected();
    expect(outcome.ok).toBe(true);
    expect(ctl.view.selected).toBeNull();
  });

  it("reload reconstructs the identical view from server state", async () => {
    const ctl = makeController();
    await ctl.create(SCENE, "default", 14);
    await ctl.submitTouch("auto");
    const id = ctl.view.sessionId!;
    const fresh = makeController();
    fresh.view.sessionId = id;
    await fresh.refresh();
    expect(fresh.view.doc).toEqual(ctl.view.doc);
  });
});

describe("S2: scripted ten-touch human session", () => {
  it("completes and matches the metrics endpoint", async () => {
    const ctl = makeController();
    await ctl.create(SCENE, "default", 42);
    for (let i = 0; i < 10; i++) {
      let outcome;
      if (i % 2 === 0) {
        // the human picks where the hint points, through the manual path
        const sug = ctl.view.doc!.suggestion;
        outcome = sug
          ? await ctl.submitTouch({ center: sug.center_world, yaw: sug.yaw,
                                    pitch: sug.pitch })
          : await ctl.submitTouch("auto");
        if (!outcome.ok) outcome = await ctl.submitTouch("auto");
      } else {
        outcome = await ctl.submitTouch("auto");
      }
      expect(outcome.ok).toBe(true);
      expect(ctl.view.doc!.state).toBe("ready");
    }
    const doc = ctl.view.doc!;
    expect(doc.touches).toBe(10);

    // chart point count equals the cd history length
    const chart = ctl.chartData();
    expect(chart.x.length).toBe(doc.cd_history.length);
    expect(chart.x.length).toBe(11);

    // final CD equals the metrics CSV download, which is the single
    // source of truth
    const api = new Api(inject("baseUrl") as string);
    const rows = parseMetricsCsv(await api.getMetricsCsv(doc.id));
    expect(rows.length).toBe(11);
    expect(rows[rows.length - 1].cd_sum)
      .toBe(doc.cd_history[doc.cd_history.length - 1].cd_sum);
    expect(rows[rows.length - 1].touch_index).toBe(10);
  });
});
