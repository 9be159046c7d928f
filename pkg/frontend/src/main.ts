// Browser entry point: wires a WebSocket and two canvases to the session
// state machine. This module is deliberately thin and untested; everything
// with behaviour lives in protocol.ts, session.ts, heatmap.ts, and input.ts.

import { parseHello, Hello } from "./protocol.js";
import { UiSessionState } from "./session.js";
import { forceHeatmap, deformHeatmap, Heatmap } from "./heatmap.js";
import { dragToMotion, scrollToMotion, keyToAction } from "./input.js";

function drawHeatmap(canvas: HTMLCanvasElement, hm: Heatmap): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const img = new ImageData(new Uint8ClampedArray(hm.rgba), hm.width, hm.height);
  canvas.width = hm.width;
  canvas.height = hm.height;
  ctx.putImageData(img, 0, 0);
}

export function start(url: string): void {
  const session = new UiSessionState();
  const forceCanvas = document.getElementById("force") as HTMLCanvasElement;
  const deformCanvas = document.getElementById("deform") as HTMLCanvasElement;
  const status = document.getElementById("status") as HTMLElement;
  let hello: Hello | null = null;

  const ws = new WebSocket(url);
  ws.binaryType = "arraybuffer";
  session.status = "connecting";

  ws.onopen = () => session.attach({ send: (json) => ws.send(json) });
  ws.onclose = () => session.detach();
  ws.onmessage = (ev: MessageEvent) => {
    if (typeof ev.data === "string") {
      hello = parseHello(ev.data);
      status.textContent = `task ${hello.task_id} @ ${hello.stream_hz} Hz`;
      return;
    }
    const pkt = session.onPacket(ev.data as ArrayBuffer);
    if (!pkt) return;
    drawHeatmap(forceCanvas, forceHeatmap(pkt.force));
    drawHeatmap(deformCanvas, deformHeatmap(pkt.deform));
    const cues = [
      pkt.cueForce ? "FORCE" : "",
      pkt.cueDeform ? "DEFORM" : "",
      pkt.cueWorkspace ? "WORKSPACE" : "",
    ].filter(Boolean);
    status.textContent =
      `${pkt.preset} | ${pkt.features.maxForce.toFixed(2)} N | ` +
      `${pkt.features.maxDeformation.toFixed(2)} mm | ` +
      (session.recording ? `REC ${pkt.framesRecorded} | ` : "") +
      cues.join(" ");
  };

  let dragging = false;
  forceCanvas.addEventListener("pointerdown", () => (dragging = true));
  window.addEventListener("pointerup", () => (dragging = false));
  window.addEventListener("pointermove", (ev) => {
    if (!dragging) return;
    session.sendMotion(
      dragToMotion({ dx: ev.movementX, dy: ev.movementY, modifier: ev.shiftKey }),
    );
  });
  window.addEventListener("wheel", (ev) => session.sendMotion(scrollToMotion(ev.deltaY)));
  window.addEventListener("keydown", (ev) => {
    const action = keyToAction(ev.key);
    if (action === "re_zero") session.sendReZero();
    else if (action) session.sendMotion(action);
  });
}
