import { InputLoop } from "./input.js";
import { Connection } from "./net.js";
import { EnvFrame, StateFrame } from "./protocol.js";
import { Camera, render, staleForMs } from "./render.js";

const canvas = document.getElementById("view") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const hud = document.getElementById("hud")!;

const params = new URLSearchParams(window.location.search);
const url = params.get("ws") ?? "ws://127.0.0.1:8765";

let env: EnvFrame | null = null;
let state: StateFrame | null = null;
let lastFrameAt = 0;
let connected = false;

const cam: Camera = { scale: 30, cx: 0, cy: 0 };

const conn = new Connection(url);
conn.onFrame = (frame) => {
  if (frame.type === "env") {
    env = frame;
    const [xmin, ymin, xmax, ymax] = frame.bounds;
    cam.cx = (xmin + xmax) / 2;
    cam.cy = (ymin + ymax) / 2;
    cam.scale = Math.min(canvas.width / (xmax - xmin + 4), canvas.height / (ymax - ymin + 4));
  } else if (frame.type === "state") {
    state = frame;
    lastFrameAt = performance.now();
  } else if (frame.type === "error") {
    console.warn("server:", frame.message);
  }
};
conn.onStatus = (ok) => {
  connected = ok;
};
conn.start();

const input = new InputLoop((msg) => conn.send(msg));
input.attach(window);
input.start();

document.getElementById("reset")!.addEventListener("click", () => {
  const seed = Math.floor(Math.random() * 10000);
  conn.send({ type: "reset", env_seed: seed });
});

// 60 fps render loop decoupled from the 10 Hz input sender
let frames = 0;
let fps = 0;
let fpsWindowStart = performance.now();

function frame() {
  const now = performance.now();
  frames += 1;
  if (now - fpsWindowStart >= 1000) {
    fps = (frames * 1000) / (now - fpsWindowStart);
    frames = 0;
    fpsWindowStart = now;
  }
  const stale = !connected || staleForMs(lastFrameAt, now);
  render(ctx, cam, env, state, stale);
  hud.textContent =
    `${fps.toFixed(0)} fps | ` +
    (state
      ? `tick ${state.tick} | seq ${state.applied_seq} | ` +
        `cmd [${state.executed_cmd.map((v) => v.toFixed(2)).join(", ")}]` +
        (state.collided ? " | COLLIDED (reset to continue)" : "")
      : "waiting for state");
  requestAnimationFrame(frame);
}
requestAnimationFrame(frame);
