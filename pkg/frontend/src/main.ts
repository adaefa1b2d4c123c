// Wiring: session controls, pointer-drag input, render loop.

import { SessionClient } from "./client.js";
import { ServerFrame } from "./protocol.js";
import { Scene, drawScene, sceneFromDisplay, sceneFromState } from "./render.js";
import { StripChart } from "./chart.js";
import { Viewport } from "./view.js";

const canvas = document.getElementById("scene") as HTMLCanvasElement;
const chartCanvas = document.getElementById("chart") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const chartCtx = chartCanvas.getContext("2d")!;
const embodimentSel = document.getElementById("embodiment") as HTMLSelectElement;
const scenarioSel = document.getElementById("scenario") as HTMLSelectElement;
const policySel = document.getElementById("policy") as HTMLSelectElement;
const applyBtn = document.getElementById("apply") as HTMLButtonElement;
const statusEl = document.getElementById("conn") as HTMLSpanElement;

const vp = new Viewport();
const chart = new StripChart();
let scene: Scene = {
  pose: [0, 0], cmd: [0, 0], hand: null, target: null, scenario: "maneuver",
  effort: 0, shear: null, slip: false, status: "running", connected: false,
};

const wsUrl = `ws://${location.host}/stream`;
const client = new SessionClient(wsUrl, {
  onFrame: (fr: ServerFrame) => {
    switch (fr.type) {
      case "hello":
        vp.half = fr.workspace_half;
        scene = { ...scene, scenario: fr.scenario };
        break;
      case "state":
        scene = sceneFromState(scene, fr);
        chart.push(fr.t, fr.effort);
        break;
      case "display":
        scene = sceneFromDisplay(scene, fr);
        chart.push(fr.t, fr.effort);
        break;
      case "gap":
        // dropped frames are fine for display; nothing to rewind
        break;
      case "error":
        console.warn("server:", fr.message);
        break;
    }
  },
  onStatus: (s) => {
    scene = { ...scene, connected: s === "open" };
    statusEl.textContent = s;
  },
});
client.connect();

// -- drag input --------------------------------------------------------

let dragging = false;

function pointerWorkspace(ev: PointerEvent): [number, number] {
  const rect = canvas.getBoundingClientRect();
  const p = vp.toWorkspace(ev.clientX - rect.left, ev.clientY - rect.top,
                           canvas.width, canvas.height);
  return vp.clamp(p);
}

canvas.addEventListener("pointerdown", (ev) => {
  dragging = true;
  canvas.setPointerCapture(ev.pointerId);
  const [y, z] = pointerWorkspace(ev);
  client.sendHand(y, z);
});
canvas.addEventListener("pointermove", (ev) => {
  if (!dragging) return;
  const [y, z] = pointerWorkspace(ev);
  client.sendHand(y, z);
});
const endDrag = (ev: PointerEvent) => {
  if (!dragging) return;
  dragging = false;
  canvas.releasePointerCapture(ev.pointerId);
  client.sendRelease();
};
canvas.addEventListener("pointerup", endDrag);
canvas.addEventListener("pointercancel", endDrag);

// -- session controls --------------------------------------------------

applyBtn.addEventListener("click", async () => {
  const body = {
    embodiment: embodimentSel.value,
    scenario: scenarioSel.value,
    policy: policySel.value,
    seed: Math.floor(Math.random() * 1e6),
  };
  const resp = await fetch("/session", {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(body),
  });
  if (!resp.ok) {
    const err = await resp.json().catch(() => ({}));
    alert(`session reset failed: ${err.error ?? resp.status}`);
  }
});

// -- render loop --------------------------------------------------------

function frame(): void {
  drawScene(ctx, vp, scene, canvas.width, canvas.height);
  chart.draw(chartCtx, chartCanvas.width, chartCanvas.height);
  requestAnimationFrame(frame);
}
requestAnimationFrame(frame);
