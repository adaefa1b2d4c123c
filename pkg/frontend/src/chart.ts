// Bounded strip chart for the live effort readout.

export class StripChart {
  private t: number[] = [];
  private v: number[] = [];

  constructor(public windowSeconds = 20, public maxPoints = 600) {}

  push(t: number, value: number): void {
    this.t.push(t);
    this.v.push(value);
    const cutoff = t - this.windowSeconds;
    let drop = 0;
    while (drop < this.t.length - 1 && this.t[drop] < cutoff) drop++;
    if (drop > 0) {
      this.t.splice(0, drop);
      this.v.splice(0, drop);
    }
    if (this.t.length > this.maxPoints) {
      const excess = this.t.length - this.maxPoints;
      this.t.splice(0, excess);
      this.v.splice(0, excess);
    }
  }

  get size(): number {
    return this.t.length;
  }

  latest(): number {
    return this.v.length ? this.v[this.v.length - 1] : 0;
  }

  draw(ctx: CanvasRenderingContext2D, w: number, h: number): void {
    ctx.clearRect(0, 0, w, h);
    ctx.strokeStyle = "#445";
    ctx.strokeRect(0.5, 0.5, w - 1, h - 1);
    if (this.t.length < 2) return;
    const t1 = this.t[this.t.length - 1];
    const t0 = t1 - this.windowSeconds;
    const vmax = Math.max(10, ...this.v);
    ctx.beginPath();
    for (let i = 0; i < this.t.length; i++) {
      const x = ((this.t[i] - t0) / this.windowSeconds) * w;
      const y = h - (this.v[i] / vmax) * (h - 6) - 3;
      if (i === 0) ctx.moveTo(x, y);
      else ctx.lineTo(x, y);
    }
    ctx.strokeStyle = "#6cf";
    ctx.stroke();
    ctx.fillStyle = "#9ab";
    ctx.font = "10px monospace";
    ctx.fillText(`${vmax.toFixed(0)} N`, 4, 12);
  }
}
