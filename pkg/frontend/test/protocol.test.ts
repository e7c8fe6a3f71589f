import { describe, expect, it } from "vitest";
import { clampCmd, parseServerFrame } from "../src/protocol.js";

describe("parseServerFrame", () => {
  it("accepts a valid state frame", () => {
    const frame = parseServerFrame(JSON.stringify({
      v: 1, type: "state", tick: 3, sim_time: 0.15, pose: [0, 0, 0],
      scan: [], executed_cmd: [0, 0, 0], user_cmd: [0, 0, 0],
      intervened: false, applied_seq: 7, collided: false, predicted_rollouts: [],
    }));
    expect(frame?.type).toBe("state");
    if (frame?.type === "state") expect(frame.applied_seq).toBe(7);
  });

  it("accepts env and error frames", () => {
    const env = parseServerFrame(JSON.stringify({
      v: 1, type: "env", seed: 1, bounds: [0, 0, 10, 10],
      circles: [], boxes: [], walls: [], robot: { half_x: 0.5, half_y: 0.3 },
    }));
    expect(env?.type).toBe("env");
    const err = parseServerFrame(JSON.stringify({ v: 1, type: "error", message: "nope" }));
    expect(err?.type).toBe("error");
  });

  it("rejects malformed json, wrong version, unknown type", () => {
    expect(parseServerFrame("{oops")).toBeNull();
    expect(parseServerFrame(JSON.stringify({ v: 2, type: "state", pose: [0, 0, 0] }))).toBeNull();
    expect(parseServerFrame(JSON.stringify({ v: 1, type: "warp" }))).toBeNull();
    expect(parseServerFrame("42")).toBeNull();
  });
});

describe("clampCmd", () => {
  it("clamps to the command range", () => {
    expect(clampCmd(5, 5, 5)).toEqual([1.0, 0.4, 1.2]);
    expect(clampCmd(-5, -5, -5)).toEqual([-1.0, -0.4, -1.2]);
    expect(clampCmd(0.3, -0.2, 0.7)).toEqual([0.3, -0.2, 0.7]);
  });
});
