// Entry point: wires the socket, state store, input, and renderer together.
// All state changes funnel through state.ts reducers; this file only moves
// data between them and the DOM.

import {
  applyMessage,
  initialState,
  meshLoaded,
  setCamera,
  setConnection,
  type UiSessionState,
} from "./state";
import { frameModel } from "./view";
import { SessionSocket, type SocketLike } from "./net";
import { CommandSender, FlyCamera, Keys, jogFromKeys } from "./input";
import { parseObj } from "./meshes";
import { SceneRenderer } from "./render";

const canvas = document.getElementById("scene") as HTMLCanvasElement;
const banner = document.getElementById("banner") as HTMLDivElement;
const hudVersion = document.getElementById("hud-version") as HTMLSpanElement;
const hudLatency = document.getElementById("hud-latency") as HTMLSpanElement;
const hudJoints = document.getElementById("hud-joints") as HTMLSpanElement;
const hudError = document.getElementById("hud-error") as HTMLDivElement;

let state: UiSessionState = initialState();
const renderer = new SceneRenderer(canvas);
const keys = new Keys();
const camera = new FlyCamera();
let selectedJoint = 0;
let cameraDirty = false;
let fetchingVersion = 0;

const wsProto = location.protocol === "https:" ? "wss:" : "ws:";
const socket = new SessionSocket(
  `${wsProto}//${location.host}/ws`,
  // handlers written for SocketLike ignore the Event argument, so the
  // browser socket satisfies it at runtime even though the lib types differ
  (url) => new WebSocket(url) as unknown as SocketLike,
  (ev) => {
    switch (ev.kind) {
      case "open":
        state = setConnection(state, "live");
        break;
      case "closed":
        state = setConnection(state, "lost");
        break;
      case "message":
        state = applyMessage(state, ev.msg);
        break;
      case "bad-line":
        console.warn(ev.error);
        break;
    }
  },
);
const sender = new CommandSender((line) => socket.send(line));
socket.start();

// mesh downloads chase the latest announced version; a version that is
// superseded while in flight is dropped instead of applied
async function pumpMeshFetch(): Promise<void> {
  const url = state.pendingMeshUrl;
  const version = state.latestVersion;
  if (url === null || version <= fetchingVersion) return;
  fetchingVersion = version;
  try {
    const res = await fetch(url);
    if (!res.ok) throw new Error(`mesh fetch failed: ${res.status}`);
    const parsed = parseObj(await res.text());
    if (version === state.latestVersion) {
      renderer.setMesh(parsed);
      state = meshLoaded(state, version);
    }
  } catch (err) {
    console.warn(err);
  } finally {
    if (fetchingVersion === version) fetchingVersion = state.renderedVersion;
  }
}

document.addEventListener("keydown", (ev) => {
  if (ev.repeat) return;
  if (ev.code.startsWith("Digit")) {
    const n = Number(ev.code.slice(5)) - 1;
    if (n >= 0) selectedJoint = n;
    return;
  }
  if (ev.code === "Escape") {
    sender.stop();
    return;
  }
  keys.press(ev.code);
});
document.addEventListener("keyup", (ev) => keys.release(ev.code));
window.addEventListener("blur", () => keys.clear());

canvas.addEventListener("click", () => canvas.requestPointerLock());
document.addEventListener("mousemove", (ev) => {
  if (document.pointerLockElement !== canvas) return;
  camera.look(ev.movementX, ev.movementY);
  cameraDirty = true;
});

function resize(): void {
  renderer.resize(window.innerWidth, window.innerHeight);
}
window.addEventListener("resize", resize);
resize();

let lastT = performance.now();
function frame(nowMs: number): void {
  const dt = Math.min(0.1, (nowMs - lastT) / 1000);
  lastT = nowMs;
  const model = frameModel(state);

  if (!model.frozen) {
    if (camera.move(keys, dt)) cameraDirty = true;
    if (cameraDirty) {
      const pose = camera.pose();
      sender.offerPose(pose.position, pose.quaternion);
      state = setCamera(state, pose);
      cameraDirty = false;
    }
    const dof = state.local ? state.local.q.length : 0;
    const dq = jogFromKeys(keys, selectedJoint, dof, dt);
    if (dq !== null) sender.jog(dq);
    sender.flush(nowMs / 1000);
    void pumpMeshFetch();
  }

  banner.hidden = model.banner === null;
  if (model.banner !== null) banner.textContent = model.banner;
  hudVersion.textContent =
    model.loadingVersion === null
      ? `mesh v${model.meshVersion}`
      : `mesh v${model.meshVersion} (v${model.loadingVersion} loading)`;
  hudLatency.textContent = `${model.latencyMs.toFixed(0)} ms`;
  hudJoints.textContent = state.local
    ? `joint ${selectedJoint + 1}: ` +
      state.local.q.map((v, i) => (i === selectedJoint ? `[${v.toFixed(2)}]` : v.toFixed(2))).join(" ")
    : "no state yet";
  hudError.hidden = state.lastError === null;
  if (state.lastError !== null) hudError.textContent = state.lastError;

  renderer.apply(model);
  renderer.render(state.camera);
  requestAnimationFrame(frame);
}
requestAnimationFrame(frame);
