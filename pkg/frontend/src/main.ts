// Browser entry point: renderer, camera, pointer wiring, pose panel.

import * as THREE from "three";

import { BridgeClient } from "./client.js";
import { DEFAULT_SCALE, MapFrameTransform, Vec3, makeTransform, retargetAnchor } from "./frames.js";
import {
  GestureState,
  Ray,
  groundAnchor,
  initialGesture,
  pointerDown,
  pointerMove,
  pointerUp,
  wheelDepth,
} from "./gesture.js";
import { formatPosePanel } from "./panel.js";
import { ConsoleScene } from "./scene.js";

const PICK_RADIUS_FACTOR = 3.0; // easier grabbing than the drone's visual size
const WHEEL_METERS_PER_TICK = 0.002;

function pointerRay(ev: { clientX: number; clientY: number }, el: HTMLElement, camera: THREE.Camera): Ray {
  const rect = el.getBoundingClientRect();
  const ndc = new THREE.Vector2(
    ((ev.clientX - rect.left) / rect.width) * 2 - 1,
    -(((ev.clientY - rect.top) / rect.height) * 2 - 1),
  );
  const rc = new THREE.Raycaster();
  rc.setFromCamera(ndc, camera);
  return {
    origin: { x: rc.ray.origin.x, y: rc.ray.origin.y, z: rc.ray.origin.z },
    dir: { x: rc.ray.direction.x, y: rc.ray.direction.y, z: rc.ray.direction.z },
  };
}

function cameraForward(camera: THREE.Camera): Vec3 {
  const f = new THREE.Vector3();
  camera.getWorldDirection(f);
  return { x: f.x, y: f.y, z: f.z };
}

export function startConsole(root: HTMLElement, url: string): void {
  const canvas = document.createElement("canvas");
  root.appendChild(canvas);
  const panel = document.createElement("pre");
  panel.id = "pose-panel";
  root.appendChild(panel);

  const renderer = new THREE.WebGLRenderer({ canvas, antialias: true });
  renderer.setSize(root.clientWidth, root.clientHeight);
  const camera = new THREE.PerspectiveCamera(50, root.clientWidth / root.clientHeight, 0.001, 100);
  camera.up.set(0, 0, 1);
  camera.position.set(0.5, -0.6, 0.45);
  camera.lookAt(0.15, 0.15, 0.05);

  const view = new ConsoleScene();
  let transform: MapFrameTransform = makeTransform(DEFAULT_SCALE);
  let gesture: GestureState = initialGesture({ x: 0.1, y: 0.1, z: 0.05 });
  let dronePos: Vec3 | null = null;
  let missionState = "idle";

  const client = new BridgeClient(url, {
    onMap: (map) => view.updateMap(map, transform),
    onOdometry: (msg) => {
      dronePos = { x: msg.position[0], y: msg.position[1], z: msg.position[2] };
      view.updateDrone(dronePos, transform);
    },
    onTrajectory: (msg) => view.updateTrajectory(msg, transform),
    onStatus: (msg) => {
      missionState = msg.state;
    },
    onConnection: (state) => {
      panel.dataset.connection = state;
    },
  });
  client.connect();

  const reproject = () => {
    const map = client.assembler.latest;
    if (map) view.updateMap(map, transform);
    if (dronePos) view.updateDrone(dronePos, transform);
    view.updateTargetWorld(gesture.targetWorld, transform);
  };

  canvas.addEventListener("pointerdown", (ev) => {
    const ray = pointerRay(ev, canvas, camera);
    if (ev.shiftKey) {
      const anchor = groundAnchor(ray);
      if (anchor) {
        transform = retargetAnchor(transform, { origin: anchor });
        reproject();
      }
      return;
    }
    gesture = pointerDown(gesture, ray, 0.2 * transform.s * PICK_RADIUS_FACTOR);
    view.setTargetHighlight(gesture.selected === "target_drone");
  });
  canvas.addEventListener("pointermove", (ev) => {
    gesture = pointerMove(gesture, pointerRay(ev, canvas, camera), cameraForward(camera));
    view.updateTargetWorld(gesture.targetWorld, transform);
  });
  canvas.addEventListener("wheel", (ev) => {
    gesture = wheelDepth(gesture, cameraForward(camera), ev.deltaY * WHEEL_METERS_PER_TICK);
    view.updateTargetWorld(gesture.targetWorld, transform);
    if (gesture.dragging) ev.preventDefault();
  });
  canvas.addEventListener("pointerup", () => {
    const { state, command } = pointerUp(gesture, transform);
    gesture = state;
    view.setTargetHighlight(false);
    if (command) client.publishTarget([command.x, command.y, command.z]);
  });

  const tick = () => {
    panel.textContent = formatPosePanel(
      dronePos,
      gesture.dragging ? pointerUpPreview(gesture, transform) : null,
      missionState,
    );
    renderer.render(view.scene, camera);
    requestAnimationFrame(tick);
  };
  requestAnimationFrame(tick);
}

/** Map-frame position the drag would publish right now. */
function pointerUpPreview(gesture: GestureState, transform: MapFrameTransform): Vec3 {
  return pointerUp(gesture, transform).command as Vec3;
}

declare global {
  interface Window {
    voxbridgeConsole?: typeof startConsole;
  }
}
if (typeof window !== "undefined") {
  window.voxbridgeConsole = startConsole;
}
