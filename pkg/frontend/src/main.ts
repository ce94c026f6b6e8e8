// DOM wiring for the human-policy console: start a session against the
// service, render the prediction, click a surface cell + pick yaw/pitch to
// order a touch (or fire the automatic policy), watch the CD chart.

import { Api } from "./api.js";
import { drawChart } from "./chart.js";
import { RenderResult, pickCell, renderView } from "./render.js";
import { SessionController } from "./state.js";

const DEFAULT_SCENE = {
  resolution: 48,
  voxel_mm: 2.5,
  camera: { height_mm: 457.2, tilt_deg: 30, res: [120, 90] },
  sensor: { w_mm: 19, h_mm: 14, res: [120, 90], k_voxels: 5 },
  shape: {
    family: "bottle",
    params: { body_radius: 0.45, neck_ratio: 0.45, half_height: 0.68,
              shoulder: 0.42 },
  },
  noise: { depth_sigma_mm: 2.0, transparent: false },
  seed: 7,
};

function el<T extends HTMLElement>(id: string): T {
  return document.getElementById(id) as T;
}

function toast(message: string) {
  const box = el<HTMLDivElement>("toasts");
  const item = document.createElement("div");
  item.className = "toast";
  item.textContent = message;
  box.appendChild(item);
  setTimeout(() => item.remove(), 4000);
}

function main() {
  const api = new Api("");
  const controller = new SessionController(api);
  const viewCanvas = el<HTMLCanvasElement>("view");
  const chartCanvas = el<HTMLCanvasElement>("chart");
  const yawSel = el<HTMLSelectElement>("yaw");
  const pitchSel = el<HTMLSelectElement>("pitch");
  const status = el<HTMLSpanElement>("status");
  let lastRender: RenderResult = { projected: [] };
  let busy = false;

  function fillOrientationChoices() {
    const doc = controller.view.doc;
    if (!doc || yawSel.options.length) return;
    for (const y of doc.sensor.yaw_choices) {
      yawSel.add(new Option(`${y}°`, String(y)));
    }
    for (const p of doc.sensor.pitch_choices) {
      pitchSel.add(new Option(`${p}°`, String(p)));
    }
  }

  function redraw() {
    const v = controller.view;
    lastRender = renderView(
      viewCanvas, v.doc, v.orbit,
      v.showSuggestion && el<HTMLInputElement>("show-suggestion").checked,
      v.selected, v.polling === "error" ? `fetch failed: ${v.lastError}` : null);
    const data = controller.chartData();
    drawChart(chartCanvas, { x: data.x, y: data.ySum },
              "Chamfer distance (sum, mm) vs touches");
    const doc = v.doc;
    status.textContent = doc
      ? `${doc.scene} | ${doc.state} | touches ${doc.touches} | ` +
        `cd ${doc.cd_history[doc.cd_history.length - 1].cd_sum.toFixed(1)}`
      : "no session";
    fillOrientationChoices();
    const sel = v.selected;
    el<HTMLSpanElement>("picked").textContent = sel
      ? `(${sel.center.map((c) => c.toFixed(0)).join(", ")}) mm`
      : "none";
  }

  async function guarded(work: () => Promise<void>) {
    if (busy) {
      toast("still working on the previous request");
      return;
    }
    busy = true;
    try {
      await work();
    } finally {
      busy = false;
      redraw();
    }
  }

  el<HTMLButtonElement>("start").onclick = () => guarded(async () => {
    let scene: unknown;
    try {
      scene = JSON.parse(el<HTMLTextAreaElement>("scene-json").value);
    } catch (err) {
      toast(`scene JSON invalid: ${err}`);
      return;
    }
    const reveal = el<HTMLInputElement>("reveal-truth").checked;
    try {
      await controller.create(scene, "default", undefined, reveal);
      yawSel.length = 0;
      pitchSel.length = 0;
    } catch (err) {
      toast(`session failed: ${err}`);
    }
  });

  el<HTMLButtonElement>("auto").onclick = () => guarded(async () => {
    const outcome = await controller.submitTouch("auto");
    if (!outcome.ok) toast(`${outcome.error}: ${outcome.detail ?? ""}`);
  });

  el<HTMLButtonElement>("touch").onclick = () => guarded(async () => {
    const sel = controller.view.selected;
    if (!sel) {
      toast("click a surface cell first");
      return;
    }
    sel.yaw = parseFloat(yawSel.value);
    sel.pitch = parseFloat(pitchSel.value);
    const outcome = await controller.submitSelected();
    if (!outcome.ok) toast(`${outcome.error}: ${outcome.detail ?? ""}`);
  });

  viewCanvas.onclick = (ev) => {
    const rect = viewCanvas.getBoundingClientRect();
    const cell = pickCell(lastRender, ev.clientX - rect.left,
                          ev.clientY - rect.top);
    if (cell) {
      controller.selectPlan(cell.world, parseFloat(yawSel.value || "0"),
                            parseFloat(pitchSel.value || "0"));
      redraw();
    }
  };

  let dragging = false;
  let last: [number, number] = [0, 0];
  viewCanvas.onmousedown = (ev) => {
    dragging = true;
    last = [ev.clientX, ev.clientY];
  };
  window.onmouseup = () => { dragging = false; };
  window.onmousemove = (ev) => {
    if (!dragging) return;
    controller.view.orbit.yaw += (ev.clientX - last[0]) * 0.01;
    controller.view.orbit.pitch = Math.max(-1.4, Math.min(1.4,
      controller.view.orbit.pitch + (ev.clientY - last[1]) * 0.01));
    last = [ev.clientX, ev.clientY];
    redraw();
  };
  viewCanvas.onwheel = (ev) => {
    ev.preventDefault();
    const z = controller.view.orbit.zoom * (ev.deltaY > 0 ? 0.9 : 1.1);
    controller.view.orbit.zoom = Math.max(0.2, Math.min(6, z));
    redraw();
  };

  el<HTMLButtonElement>("metrics").onclick = async () => {
    const id = controller.view.sessionId;
    if (!id) return;
    const csv = await api.getMetricsCsv(id);
    const blob = new Blob([csv], { type: "text/csv" });
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = `${id}-metrics.csv`;
    a.click();
  };

  el<HTMLTextAreaElement>("scene-json").value =
    JSON.stringify(DEFAULT_SCENE, null, 1);

  // 1 Hz polling keeps the view fresh while refinements run server-side
  setInterval(async () => {
    if (!busy && controller.view.sessionId) {
      await controller.refresh();
      redraw();
    }
  }, 1000);
  redraw();
}

main();
