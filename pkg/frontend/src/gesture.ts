// Pointer interaction as a pure state machine: pick the white target drone
// with a ray, drag it in a camera-parallel plane, adjust depth with the
// wheel, and emit exactly one map-frame target on release. A ray that
// misses everything changes nothing.

import { MapFrameTransform, Vec3, worldToMap } from "./frames.js";

export interface Ray {
  origin: Vec3;
  dir: Vec3; // unit
}

export type Selected = "target_drone" | "anchor" | null;

export interface GestureState {
  selected: Selected;
  dragging: boolean;
  /** White drone position, operator world frame. */
  targetWorld: Vec3;
}

const sub = (a: Vec3, b: Vec3): Vec3 => ({ x: a.x - b.x, y: a.y - b.y, z: a.z - b.z });
const add = (a: Vec3, b: Vec3): Vec3 => ({ x: a.x + b.x, y: a.y + b.y, z: a.z + b.z });
const scale = (a: Vec3, k: number): Vec3 => ({ x: a.x * k, y: a.y * k, z: a.z * k });
const dot = (a: Vec3, b: Vec3): number => a.x * b.x + a.y * b.y + a.z * b.z;

/** Distance along the ray to the closest approach with a sphere, or null. */
export function raySphere(ray: Ray, center: Vec3, radius: number): number | null {
  const oc = sub(ray.origin, center);
  const b = dot(oc, ray.dir);
  const c = dot(oc, oc) - radius * radius;
  const disc = b * b - c;
  if (disc < 0) return null;
  const t = -b - Math.sqrt(disc);
  return t >= 0 ? t : null;
}

/** Ray / plane intersection point; null when parallel (ignored gesture). */
export function rayPlane(ray: Ray, point: Vec3, normal: Vec3): Vec3 | null {
  const denom = dot(ray.dir, normal);
  if (Math.abs(denom) < 1e-9) return null;
  const t = dot(sub(point, ray.origin), normal) / denom;
  if (t < 0) return null;
  return add(ray.origin, scale(ray.dir, t));
}

export function initialGesture(targetWorld: Vec3): GestureState {
  return { selected: null, dragging: false, targetWorld: { ...targetWorld } };
}

export function pointerDown(state: GestureState, ray: Ray, pickRadius: number): GestureState {
  if (raySphere(ray, state.targetWorld, pickRadius) === null) return state;
  return { ...state, selected: "target_drone", dragging: true };
}

/** Drag in the camera-parallel plane through the drone's current position. */
export function pointerMove(state: GestureState, ray: Ray, cameraForward: Vec3): GestureState {
  if (!state.dragging) return state;
  const hit = rayPlane(ray, state.targetWorld, cameraForward);
  if (!hit) return state;
  return { ...state, targetWorld: hit };
}

/** Wheel moves the drone along the camera forward axis (depth). */
export function wheelDepth(state: GestureState, cameraForward: Vec3, meters: number): GestureState {
  if (!state.dragging) return state;
  return { ...state, targetWorld: add(state.targetWorld, scale(cameraForward, meters)) };
}

export interface ReleaseResult {
  state: GestureState;
  /** Map-frame command to publish, present only when a drag just ended. */
  command: Vec3 | null;
}

export function pointerUp(state: GestureState, transform: MapFrameTransform): ReleaseResult {
  if (!state.dragging) return { state, command: null };
  return {
    state: { ...state, selected: null, dragging: false },
    command: worldToMap(state.targetWorld, transform),
  };
}

/** Anchor tap: ground-plane (z=0) intersection re-anchors the map. */
export function groundAnchor(ray: Ray): Vec3 | null {
  return rayPlane(ray, { x: 0, y: 0, z: 0 }, { x: 0, y: 0, z: 1 });
}
