// Wire protocol shared with the teleop service. All frames carry v: 1.

export const PROTOCOL_VERSION = 1;

// Command range the robot accepts: forward, lateral [m/s], yaw rate [rad/s].
export const CMD_LOW = [-1.0, -0.4, -1.2] as const;
export const CMD_HIGH = [1.0, 0.4, 1.2] as const;

export interface Rollout {
  xs: number[];
  ys: number[];
  ps: number[];
}

export interface EnvFrame {
  v: number;
  type: "env";
  seed: number;
  bounds: [number, number, number, number];
  circles: number[][]; // [cx, cy, r]
  boxes: number[][];   // [cx, cy, hx, hy]
  walls: number[][];   // [x1, y1, x2, y2]
  robot: { half_x: number; half_y: number };
}

export interface StateFrame {
  v: number;
  type: "state";
  tick: number;
  sim_time: number;
  pose: [number, number, number];
  scan: number[];
  executed_cmd: number[];
  user_cmd: number[];
  intervened: boolean;
  applied_seq: number;
  collided: boolean;
  predicted_rollouts: Rollout[];
}

export interface ErrorFrame {
  v: number;
  type: "error";
  message: string;
}

export type ServerFrame = EnvFrame | StateFrame | ErrorFrame;

export interface CmdMessage {
  type: "cmd";
  v_forward: number;
  v_lateral: number;
  yaw_rate: number;
  seq: number;
}

export function clampCmd(vf: number, vl: number, wz: number): [number, number, number] {
  const clamp = (v: number, lo: number, hi: number) => Math.min(Math.max(v, lo), hi);
  return [
    clamp(vf, CMD_LOW[0], CMD_HIGH[0]),
    clamp(vl, CMD_LOW[1], CMD_HIGH[1]),
    clamp(wz, CMD_LOW[2], CMD_HIGH[2]),
  ];
}

export function parseServerFrame(raw: string): ServerFrame | null {
  let msg: unknown;
  try {
    msg = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof msg !== "object" || msg === null) return null;
  const frame = msg as Record<string, unknown>;
  if (frame.v !== PROTOCOL_VERSION) return null;
  if (frame.type === "env" && Array.isArray(frame.circles) && Array.isArray(frame.bounds)) {
    return frame as unknown as EnvFrame;
  }
  if (frame.type === "state" && Array.isArray(frame.pose)) {
    return frame as unknown as StateFrame;
  }
  if (frame.type === "error" && typeof frame.message === "string") {
    return frame as unknown as ErrorFrame;
  }
  return null;
}
