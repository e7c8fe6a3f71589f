// Keyboard/gamepad -> velocity commands, sent at a fixed 10 Hz with a
// monotone sequence number. Releasing everything sends the zero command.

import { clampCmd, CmdMessage, CMD_HIGH, CMD_LOW } from "./protocol.js";

export interface InputState {
  held: Set<string>;
  gamepadAxes: number[] | null;
}

export function commandFromInput(state: InputState): [number, number, number] {
  let vf = 0;
  let vl = 0;
  let wz = 0;
  const held = state.held;
  if (held.has("KeyW")) vf += CMD_HIGH[0];
  if (held.has("KeyS")) vf += CMD_LOW[0];
  if (held.has("KeyA")) vl += CMD_HIGH[1];
  if (held.has("KeyD")) vl += CMD_LOW[1];
  if (held.has("KeyQ")) wz += CMD_HIGH[2];
  if (held.has("KeyE")) wz += CMD_LOW[2];
  if (state.gamepadAxes && state.gamepadAxes.length >= 4) {
    const dead = (v: number) => (Math.abs(v) < 0.12 ? 0 : v);
    vf += -dead(state.gamepadAxes[1]) * CMD_HIGH[0];
    vl += -dead(state.gamepadAxes[0]) * CMD_HIGH[1];
    wz += -dead(state.gamepadAxes[2]) * CMD_HIGH[2];
  }
  return clampCmd(vf, vl, wz);
}

export class InputLoop {
  readonly state: InputState = { held: new Set(), gamepadAxes: null };
  private seq = 0;
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(private send: (msg: CmdMessage) => void, private hz = 10) {}

  attach(target: EventTarget) {
    target.addEventListener("keydown", (e) => this.state.held.add((e as KeyboardEvent).code));
    target.addEventListener("keyup", (e) => this.state.held.delete((e as KeyboardEvent).code));
    target.addEventListener("blur", () => this.state.held.clear());
  }

  pollGamepad() {
    const pads = typeof navigator !== "undefined" && navigator.getGamepads
      ? navigator.getGamepads()
      : [];
    const pad = pads && pads[0];
    this.state.gamepadAxes = pad ? Array.from(pad.axes) : null;
  }

  nextMessage(): CmdMessage {
    this.pollGamepad();
    const [vf, vl, wz] = commandFromInput(this.state);
    return { type: "cmd", v_forward: vf, v_lateral: vl, yaw_rate: wz, seq: this.seq++ };
  }

  start() {
    if (this.timer !== null) return;
    this.timer = setInterval(() => this.send(this.nextMessage()), 1000 / this.hz);
  }

  stop() {
    if (this.timer !== null) clearInterval(this.timer);
    this.timer = null;
  }
}
