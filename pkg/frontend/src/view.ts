// Workspace <-> screen mapping. Workspace is a centered square of
// half-width `half` meters; y points right, z points up on screen.

export class Viewport {
  constructor(public half = 0.5, public margin = 24) {}

  scale(w: number, h: number): number {
    return (Math.min(w, h) - 2 * this.margin) / (2 * this.half);
  }

  toScreen(p: [number, number], w: number, h: number): [number, number] {
    const s = this.scale(w, h);
    return [w / 2 + p[0] * s, h / 2 - p[1] * s];
  }

  toWorkspace(x: number, y: number, w: number, h: number): [number, number] {
    const s = this.scale(w, h);
    return [(x - w / 2) / s, (h / 2 - y) / s];
  }

  clamp(p: [number, number]): [number, number] {
    const c = (v: number) => Math.max(-this.half, Math.min(this.half, v));
    return [c(p[0]), c(p[1])];
  }

  metersToPixels(m: number, w: number, h: number): number {
    return m * this.scale(w, h);
  }
}
