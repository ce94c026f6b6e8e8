// Canvas renderer: orthographic orbit view of the transported voxel grid,
// confidence-colored, with suggestion / selection / truth overlays.

import { PlanDoc, StateDoc } from "./api.js";
import { VoxelData, decodeBase64, decodeVxg } from "./vxg.js";

export interface ProjectedCell {
  sx: number;
  sy: number;
  depth: number;
  world: number[];
  value: number;
}

interface Basis {
  right: number[];
  up: number[];
  fwd: number[];
  center: number[];
  scale: number;
}

function orbitBasis(orbit: { yaw: number; pitch: number; zoom: number },
                    center: number[], radius: number,
                    w: number, h: number): Basis {
  const cy = Math.cos(orbit.yaw), sy = Math.sin(orbit.yaw);
  const cp = Math.cos(orbit.pitch), sp = Math.sin(orbit.pitch);
  const fwd = [cy * cp, sy * cp, -sp];
  const right = [-sy, cy, 0];
  const up = [
    right[1] * fwd[2] - right[2] * fwd[1],
    right[2] * fwd[0] - right[0] * fwd[2],
    right[0] * fwd[1] - right[1] * fwd[0],
  ];
  const scale = (Math.min(w, h) / (2.4 * radius)) * orbit.zoom;
  return { right, up, fwd, center, scale };
}

function project(b: Basis, p: number[], w: number, h: number):
    [number, number, number] {
  const d = [p[0] - b.center[0], p[1] - b.center[1], p[2] - b.center[2]];
  const x = d[0] * b.right[0] + d[1] * b.right[1] + d[2] * b.right[2];
  const y = d[0] * b.up[0] + d[1] * b.up[1] + d[2] * b.up[2];
  const z = d[0] * b.fwd[0] + d[1] * b.fwd[1] + d[2] * b.fwd[2];
  return [w / 2 + x * b.scale, h / 2 - y * b.scale, z];
}

export function gridWorldCells(doc: StateDoc): { world: number[]; v: number }[] {
  const grid: VoxelData = decodeVxg(decodeBase64(doc.grid.vxg_b64));
  const [X, Y, Z] = grid.dims;
  const origin = doc.grid.origin_world;
  const factor = doc.grid.factor;
  const cellMm = doc.grid.voxel_mm / factor;   // full-resolution voxel size
  const out: { world: number[]; v: number }[] = [];
  let i = 0;
  for (let x = 0; x < X; x++) {
    for (let y = 0; y < Y; y++) {
      for (let z = 0; z < Z; z++, i++) {
        const v = grid.values[i];
        const c = Math.abs(v - 0.5);
        if (v < 0.5 && c > 0.35) continue;   // skip confident empty space
        // pooled cell center in full-voxel coordinates: x*f + (f-1)/2
        out.push({
          world: [
            origin[0] + (x * factor + (factor - 1) / 2) * cellMm,
            origin[1] + (y * factor + (factor - 1) / 2) * cellMm,
            origin[2] + (z * factor + (factor - 1) / 2) * cellMm,
          ],
          v,
        });
      }
    }
  }
  return out;
}

function confidenceColor(v: number): string {
  const c = Math.abs(v - 0.5);            // 0 = uncertain, 0.5 = certain
  if (v >= 0.5) {
    // occupied: gray-blue when certain, hot orange when uncertain
    const t = 1 - c / 0.5;
    const r = Math.round(90 + 165 * t);
    const g = Math.round(110 + 60 * t);
    const b = Math.round(160 - 120 * t);
    return `rgb(${r},${g},${b})`;
  }
  const t = 1 - c / 0.35;                 // fading uncertain-empty halo
  return `rgba(255,140,0,${(0.35 * t).toFixed(2)})`;
}

export interface RenderResult {
  projected: ProjectedCell[];
}

export function renderView(canvas: HTMLCanvasElement, doc: StateDoc | null,
                           orbit: { yaw: number; pitch: number; zoom: number },
                           showSuggestion: boolean,
                           selected: { center: number[] } | null,
                           banner: string | null): RenderResult {
  const ctx = canvas.getContext("2d")!;
  const w = canvas.width, h = canvas.height;
  ctx.fillStyle = "#11151c";
  ctx.fillRect(0, 0, w, h);
  if (banner) {
    ctx.fillStyle = "#ff6b6b";
    ctx.font = "14px sans-serif";
    ctx.fillText(banner, 12, 22);
  }
  if (!doc) return { projected: [] };

  const cells = gridWorldCells(doc);
  const full = doc.grid.full_dims;
  const cellMm = doc.grid.voxel_mm / doc.grid.factor;
  const radius = 0.5 * Math.hypot(full[0], full[1], full[2]) * cellMm;
  const centerWorld = [
    doc.grid.origin_world[0] + (full[0] / 2) * cellMm,
    doc.grid.origin_world[1] + (full[1] / 2) * cellMm,
    doc.grid.origin_world[2] + (full[2] / 2) * cellMm,
  ];
  const basis = orbitBasis(orbit, centerWorld, radius, w, h);

  const projected: ProjectedCell[] = cells.map(({ world, v }) => {
    const [sx, sy, depth] = project(basis, world, w, h);
    return { sx, sy, depth, world, value: v };
  });
  projected.sort((a, b) => a.depth - b.depth);
  const px = Math.max(2, basis.scale * doc.grid.voxel_mm * 0.8);
  for (const cell of projected) {
    ctx.fillStyle = confidenceColor(cell.value);
    ctx.fillRect(cell.sx - px / 2, cell.sy - px / 2, px, px);
  }

  if (doc.truth_points) {
    ctx.fillStyle = "rgba(80,220,120,0.6)";
    for (const p of doc.truth_points) {
      const [sx, sy] = project(basis, p, w, h);
      ctx.fillRect(sx - 1, sy - 1, 2, 2);
    }
  }

  if (showSuggestion && doc.suggestion) {
    drawPlanMarker(ctx, basis, doc.suggestion, w, h, "#4dd2ff");
  }
  if (selected) {
    const [sx, sy] = project(basis, selected.center, w, h);
    ctx.strokeStyle = "#ffe66d";
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.arc(sx, sy, 9, 0, 2 * Math.PI);
    ctx.stroke();
  }
  return { projected };
}

function drawPlanMarker(ctx: CanvasRenderingContext2D, basis: Basis,
                        plan: PlanDoc, w: number, h: number, color: string) {
  const [cx, cy] = project(basis, plan.center_world, w, h);
  const tail = [
    plan.center_world[0] - plan.normal[0] * 14,
    plan.center_world[1] - plan.normal[1] * 14,
    plan.center_world[2] - plan.normal[2] * 14,
  ];
  const [tx, ty] = project(basis, tail, w, h);
  ctx.strokeStyle = color;
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.moveTo(tx, ty);
  ctx.lineTo(cx, cy);
  ctx.stroke();
  ctx.beginPath();
  ctx.arc(cx, cy, 6, 0, 2 * Math.PI);
  ctx.stroke();
}

export function pickCell(result: RenderResult, x: number,
                         y: number): ProjectedCell | null {
  let best: ProjectedCell | null = null;
  let bestDist = 12;
  for (const cell of result.projected) {
    if (cell.value < 0.5) continue;      // only surface-ish cells are pickable
    const d = Math.hypot(cell.sx - x, cell.sy - y);
    if (d < bestDist) {
      bestDist = d;
      best = cell;
    }
  }
  return best;
}
