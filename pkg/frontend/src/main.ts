/**
 * Browser entry: wires the canvas renderer, anchor interactions, contact
 * mode, feasibility toggles and the keyframe timeline to a session server
 * reached over the WebSocket bridge.
 */

import { WebSocketTransport } from "./client.js";
import { ContactModeFlow } from "./contactMode.js";
import { DragThrottle } from "./dragThrottle.js";
import { SequencedClient } from "./protocol.js";
import { applyServerMessage, emptyScene, undoEnabled } from "./scene.js";
import { defaultCamera, renderScene } from "./render.js";

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

export function startWorkbench(): void {
  const canvas = byId<HTMLCanvasElement>("scene");
  const status = byId<HTMLDivElement>("status");
  const undoButton = byId<HTMLButtonElement>("undo");
  const recordButton = byId<HTMLButtonElement>("record");
  const solveButton = byId<HTMLButtonElement>("solve");
  const regionToggle = byId<HTMLButtonElement>("region-toggle");
  const contactButton = byId<HTMLButtonElement>("contact-mode");
  const url = new URLSearchParams(location.search).get("server") ?? "ws://127.0.0.1:7382";

  const scene = emptyScene();
  const camera = defaultCamera();
  const transport = new WebSocketTransport(url);
  const client = new SequencedClient(transport);
  const contact = new ContactModeFlow(client);
  const drag = new DragThrottle(client);

  client.onServerMessage((msg) => {
    applyServerMessage(scene, msg);
    undoButton.disabled = !undoEnabled(scene);
    status.textContent =
      scene.lastError ??
      `rev ${scene.revision} | keyframes ${scene.keyframes} | ` +
        (scene.solve ? `${scene.solve.status} in ${scene.solve.iterations}` : "idle");
    renderScene(canvas, scene, camera);
  });

  client.hello();

  solveButton.onclick = () => client.send("solve_tick", {});
  recordButton.onclick = () => client.send("record_keyframe", {});
  undoButton.onclick = () => client.send("undo", {});
  regionToggle.onclick = () => {
    const next = scene.regionMode === "flat" ? "multi-contact" : "flat";
    client.send("set_region_mode", { mode: next });
    client.send("query_feasibility", { region: true, torques: true });
  };
  contactButton.onclick = () => contact.begin();
  window.addEventListener("keydown", (ev) => {
    if (ev.key === "Escape") contact.cancel();
  });
  canvas.addEventListener("click", () => {
    contact.click();
  });
  // Mouse drags orbit the camera; anchor dragging itself is pointer-captured
  // per gizmo and throttled through `drag` (see DragThrottle).
  let orbiting = false;
  canvas.addEventListener("mousedown", () => (orbiting = true));
  window.addEventListener("mouseup", () => {
    orbiting = false;
    renderScene(canvas, scene, camera);
  });
  canvas.addEventListener("mousemove", (ev) => {
    if (!orbiting) return;
    camera.yaw += ev.movementX * 0.005;
    camera.pitch = Math.min(Math.max(camera.pitch + ev.movementY * 0.005, -1.4), 1.4);
    renderScene(canvas, scene, camera);
  });
  void drag;
}

if (typeof document !== "undefined" && document.getElementById("scene")) {
  startWorkbench();
}
