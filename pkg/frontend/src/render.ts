// Canvas drawing of the workspace scene.

import { StateFrame, DisplayFrame, ShearSummary } from "./protocol.js";
import { Viewport } from "./view.js";

const BOX_HALF = 0.04; // drawn box half-size, m

export interface Scene {
  pose: [number, number];
  cmd: [number, number];
  hand: [number, number] | null;
  target: [number, number] | null;
  scenario: string;
  effort: number;
  shear: ShearSummary | null;
  slip: boolean;
  status: string;
  connected: boolean;
}

export function sceneFromState(prev: Scene, fr: StateFrame): Scene {
  return { ...prev, pose: fr.pose, cmd: fr.cmd, target: fr.target,
           effort: fr.effort, shear: fr.shear_summary, slip: fr.slip,
           status: fr.status };
}

export function sceneFromDisplay(prev: Scene, fr: DisplayFrame): Scene {
  return { ...prev, pose: fr.pose, cmd: fr.cmd, hand: fr.hand,
           effort: fr.effort, slip: fr.slip || prev.slip };
}

export function drawScene(ctx: CanvasRenderingContext2D, vp: Viewport,
                          scene: Scene, w: number, h: number): void {
  ctx.clearRect(0, 0, w, h);
  ctx.fillStyle = "#10141c";
  ctx.fillRect(0, 0, w, h);

  // workspace bounds
  const [bx, by] = vp.toScreen([-vp.half, vp.half], w, h);
  const side = vp.metersToPixels(2 * vp.half, w, h);
  ctx.strokeStyle = "#2a3242";
  ctx.strokeRect(bx, by, side, side);

  if (scene.scenario === "place" && scene.target) {
    const [tx, ty] = vp.toScreen(scene.target, w, h);
    const bw = vp.metersToPixels(2 * BOX_HALF, w, h);
    ctx.fillStyle = "#24432c";
    ctx.fillRect(tx - bw / 2, ty, bw, bw * 0.8);
    ctx.strokeStyle = "#3f7a4e";
    ctx.strokeRect(tx - bw / 2, ty, bw, bw * 0.8);
  }

  // commanded pose ghost
  const [cx, cy] = vp.toScreen(scene.cmd, w, h);
  const bpx = vp.metersToPixels(2 * BOX_HALF, w, h);
  ctx.strokeStyle = "#49617e";
  ctx.setLineDash([4, 3]);
  ctx.strokeRect(cx - bpx / 2, cy - bpx / 2, bpx, bpx);
  ctx.setLineDash([]);

  // the grasped box
  const [px, py] = vp.toScreen(scene.pose, w, h);
  ctx.fillStyle = scene.slip ? "#7e3440" : "#b08948";
  ctx.fillRect(px - bpx / 2, py - bpx / 2, bpx, bpx);
  ctx.strokeStyle = "#e6c98c";
  ctx.strokeRect(px - bpx / 2, py - bpx / 2, bpx, bpx);

  if (scene.hand) {
    const [hx, hy] = vp.toScreen(scene.hand, w, h);
    ctx.beginPath();
    ctx.arc(hx, hy, 6, 0, 2 * Math.PI);
    ctx.strokeStyle = "#d66";
    ctx.stroke();
    ctx.beginPath();
    ctx.moveTo(hx, hy);
    ctx.lineTo(px, py);
    ctx.strokeStyle = "rgba(214,102,102,0.35)";
    ctx.stroke();
  }

  if (scene.shear) {
    drawPadGlyph(ctx, scene.shear.left, px - bpx * 0.9, py, bpx);
    drawPadGlyph(ctx, scene.shear.right, px + bpx * 0.9, py, bpx);
  }

  ctx.fillStyle = "#cde";
  ctx.font = "13px monospace";
  ctx.fillText(`Eff. ${scene.effort.toFixed(2)} N`, 10, 18);
  ctx.fillText(`status: ${scene.status}`, 10, 34);

  if (scene.slip) {
    banner(ctx, w, "GRASP SLIPPED — trial failed", "#d84a5c");
  }
  if (!scene.connected) {
    ctx.fillStyle = "rgba(10,12,18,0.72)";
    ctx.fillRect(0, 0, w, h);
    banner(ctx, w, "disconnected — retrying…", "#888");
  }
}

function banner(ctx: CanvasRenderingContext2D, w: number, text: string,
                color: string): void {
  ctx.fillStyle = color;
  ctx.font = "bold 16px sans-serif";
  const tw = ctx.measureText(text).width;
  ctx.fillText(text, (w - tw) / 2, 28);
}

/** Arrow = mean flow vector, circle radius = |mean divergence|. */
export function drawPadGlyph(ctx: CanvasRenderingContext2D,
                             pad: { flow: [number, number]; div: number },
                             x: number, y: number, size: number): void {
  const r = Math.min(Math.abs(pad.div) * size * 0.8, size);
  ctx.beginPath();
  ctx.arc(x, y, Math.max(r, 1), 0, 2 * Math.PI);
  ctx.strokeStyle = pad.div >= 0 ? "#5a9" : "#95a";
  ctx.stroke();
  const scale = size * 0.12;
  const dx = pad.flow[0] * scale;
  const dy = pad.flow[1] * scale;
  ctx.beginPath();
  ctx.moveTo(x, y);
  ctx.lineTo(x + dx, y + dy);
  ctx.strokeStyle = "#fc6";
  ctx.lineWidth = 2;
  ctx.stroke();
  ctx.lineWidth = 1;
}
