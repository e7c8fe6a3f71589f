// Top-down canvas renderer. Pure scene-building helpers are separated from
// canvas calls so the segmentation logic is unit-testable.

import { EnvFrame, Rollout, StateFrame } from "./protocol.js";

export const COLLISION_THRESHOLD = 0.3;

export interface Camera {
  scale: number;   // pixels per meter
  cx: number;      // world point at canvas center
  cy: number;
}

export function worldToCanvas(cam: Camera, w: number, h: number,
                              x: number, y: number): [number, number] {
  return [w / 2 + (x - cam.cx) * cam.scale, h / 2 - (y - cam.cy) * cam.scale];
}

export interface RolloutSegment {
  xs: number[];
  ys: number[];
  danger: boolean; // p >= threshold from this point on
}

// Split a predicted rollout into a safe prefix and a danger suffix; the
// danger suffix starts at the first step whose collision probability crosses
// the threshold.
export function segmentRollout(r: Rollout, threshold = COLLISION_THRESHOLD): RolloutSegment[] {
  const n = Math.min(r.xs.length, r.ys.length, r.ps.length);
  let firstHit = n;
  for (let i = 0; i < n; i++) {
    if (r.ps[i] >= threshold) {
      firstHit = i;
      break;
    }
  }
  const segs: RolloutSegment[] = [];
  if (firstHit > 0) {
    segs.push({ xs: r.xs.slice(0, firstHit), ys: r.ys.slice(0, firstHit), danger: false });
  }
  if (firstHit < n) {
    segs.push({ xs: r.xs.slice(firstHit), ys: r.ys.slice(firstHit), danger: true });
  }
  return segs;
}

export function staleForMs(lastFrameAt: number, now: number): boolean {
  return now - lastFrameAt > 1000;
}

function drawPolyline(ctx: CanvasRenderingContext2D, cam: Camera, w: number, h: number,
                      xs: number[], ys: number[], color: string, dotted: boolean) {
  if (xs.length === 0) return;
  ctx.strokeStyle = color;
  ctx.fillStyle = color;
  ctx.lineWidth = 2;
  ctx.setLineDash(dotted ? [4, 4] : []);
  ctx.beginPath();
  for (let i = 0; i < xs.length; i++) {
    const [px, py] = worldToCanvas(cam, w, h, xs[i], ys[i]);
    if (i === 0) ctx.moveTo(px, py);
    else ctx.lineTo(px, py);
  }
  ctx.stroke();
  ctx.setLineDash([]);
  for (let i = 0; i < xs.length; i++) {
    const [px, py] = worldToCanvas(cam, w, h, xs[i], ys[i]);
    ctx.beginPath();
    ctx.arc(px, py, 2.5, 0, 2 * Math.PI);
    ctx.fill();
  }
}

export function render(ctx: CanvasRenderingContext2D, cam: Camera,
                       env: EnvFrame | null, state: StateFrame | null,
                       stale: boolean) {
  const w = ctx.canvas.width;
  const h = ctx.canvas.height;
  ctx.fillStyle = "#10141a";
  ctx.fillRect(0, 0, w, h);
  if (env) {
    ctx.fillStyle = "#3a4454";
    for (const [cx, cy, r] of env.circles) {
      const [px, py] = worldToCanvas(cam, w, h, cx, cy);
      ctx.beginPath();
      ctx.arc(px, py, r * cam.scale, 0, 2 * Math.PI);
      ctx.fill();
    }
    for (const [cx, cy, hx, hy] of env.boxes) {
      const [px, py] = worldToCanvas(cam, w, h, cx - hx, cy + hy);
      ctx.fillRect(px, py, 2 * hx * cam.scale, 2 * hy * cam.scale);
    }
    ctx.strokeStyle = "#8892a0";
    ctx.lineWidth = 3;
    for (const [x1, y1, x2, y2] of env.walls) {
      const [ax, ay] = worldToCanvas(cam, w, h, x1, y1);
      const [bx, by] = worldToCanvas(cam, w, h, x2, y2);
      ctx.beginPath();
      ctx.moveTo(ax, ay);
      ctx.lineTo(bx, by);
      ctx.stroke();
    }
  }
  if (state && env) {
    const [rx, ry, yaw] = state.pose;
    // lidar rays (sensor sits 0.3 m behind the body origin)
    const sx = rx - 0.3 * Math.cos(yaw);
    const sy = ry - 0.3 * Math.sin(yaw);
    ctx.strokeStyle = "rgba(90, 200, 160, 0.25)";
    ctx.lineWidth = 1;
    const n = state.scan.length;
    ctx.beginPath();
    for (let i = 0; i < n; i += 2) {
      const ang = yaw + (2 * Math.PI * i) / n;
      const d = state.scan[i] * 10.0;
      const [ax, ay] = worldToCanvas(cam, w, h, sx, sy);
      const [bx, by] = worldToCanvas(cam, w, h, sx + d * Math.cos(ang), sy + d * Math.sin(ang));
      ctx.moveTo(ax, ay);
      ctx.lineTo(bx, by);
    }
    ctx.stroke();

    // predicted rollouts: user command (yellow/red), executed command (blue)
    const rollouts = state.predicted_rollouts;
    if (rollouts.length > 0) {
      for (const seg of segmentRollout(rollouts[0])) {
        drawPolyline(ctx, cam, w, h, seg.xs, seg.ys,
                     seg.danger ? "#ff4d4d" : "#ffd94d", true);
      }
    }
    if (rollouts.length > 1) {
      drawPolyline(ctx, cam, w, h, rollouts[1].xs, rollouts[1].ys, "#58a6ff", true);
    }

    // robot footprint
    const hx = env.robot.half_x;
    const hy = env.robot.half_y;
    ctx.save();
    const [px, py] = worldToCanvas(cam, w, h, rx, ry);
    ctx.translate(px, py);
    ctx.rotate(-yaw);
    ctx.fillStyle = state.collided ? "#c03030" : "#3fb950";
    ctx.fillRect(-hx * cam.scale, -hy * cam.scale, 2 * hx * cam.scale, 2 * hy * cam.scale);
    ctx.fillStyle = "#ffffff";
    ctx.fillRect(hx * cam.scale - 4, -2, 4, 4); // heading marker
    ctx.restore();
  }
  if (state?.intervened) {
    ctx.fillStyle = "rgba(255, 77, 77, 0.9)";
    ctx.font = "bold 20px sans-serif";
    ctx.textAlign = "center";
    ctx.fillText("SAFETY OVERRIDE", w / 2, 34);
  }
  if (stale) {
    ctx.fillStyle = "rgba(0, 0, 0, 0.6)";
    ctx.fillRect(0, 0, w, h);
    ctx.fillStyle = "#ffffff";
    ctx.font = "bold 24px sans-serif";
    ctx.textAlign = "center";
    ctx.fillText("disconnected", w / 2, h / 2);
  }
}
