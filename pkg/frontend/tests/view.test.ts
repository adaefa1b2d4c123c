import { describe, expect, it } from "vitest";

import { Viewport } from "../src/view.js";
import { StripChart } from "../src/chart.js";

describe("workspace/screen mapping", () => {
  const vp = new Viewport(0.5, 20);

  it("round-trips points", () => {
    const [sx, sy] = vp.toScreen([0.2, -0.3], 640, 640);
    const [wy, wz] = vp.toWorkspace(sx, sy, 640, 640);
    expect(wy).toBeCloseTo(0.2, 6);
    expect(wz).toBeCloseTo(-0.3, 6);
  });

  it("centers the origin and flips z", () => {
    expect(vp.toScreen([0, 0], 640, 640)).toEqual([320, 320]);
    const [, up] = vp.toScreen([0, 0.4], 640, 640);
    expect(up).toBeLessThan(320);
  });

  it("clamps drags to the workspace", () => {
    expect(vp.clamp([2.0, -9.0])).toEqual([0.5, -0.5]);
  });
});

describe("strip chart stays bounded", () => {
  it("never exceeds maxPoints under a long stream (soak analog)", () => {
    const chart = new StripChart(20, 600);
    // 3000 s of 10 Hz frames
    for (let i = 0; i < 30000; i++) {
      chart.push(i / 10, Math.random() * 5);
    }
    expect(chart.size).toBeLessThanOrEqual(600);
    expect(chart.latest()).toBeGreaterThanOrEqual(0);
  });

  it("keeps only the display window", () => {
    const chart = new StripChart(20, 10000);
    for (let i = 0; i < 500; i++) chart.push(i * 0.1, 1);
    expect(chart.size).toBeLessThanOrEqual(201);
  });
});
