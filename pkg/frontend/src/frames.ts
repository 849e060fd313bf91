// Map-frame <-> world-frame similarity transform, matching the server's
// convention: world = s * R(yaw) * p + origin, R a right-handed rotation
// about +Z. Right-handed, Z-up, meters, radians.

export interface Vec3 {
  x: number;
  y: number;
  z: number;
}

export interface MapFrameTransform {
  s: number;
  yaw: number;
  origin: Vec3;
}

// Default on connect: a 5x6 m world lands on a 25x30 cm tabletop.
export const DEFAULT_SCALE = 0.05;

export function normalizeYaw(yaw: number): number {
  let y = (yaw + Math.PI) % (2 * Math.PI);
  if (y <= 0) y += 2 * Math.PI;
  return y - Math.PI;
}

export function makeTransform(s = 1.0, yaw = 0.0, origin: Vec3 = { x: 0, y: 0, z: 0 }): MapFrameTransform {
  if (!(s > 0)) throw new Error(`scale must be > 0, got ${s}`);
  return { s, yaw: normalizeYaw(yaw), origin: { ...origin } };
}

export function mapToWorld(p: Vec3, t: MapFrameTransform): Vec3 {
  const c = Math.cos(t.yaw);
  const si = Math.sin(t.yaw);
  return {
    x: t.s * (c * p.x - si * p.y) + t.origin.x,
    y: t.s * (si * p.x + c * p.y) + t.origin.y,
    z: t.s * p.z + t.origin.z,
  };
}

export function worldToMap(p: Vec3, t: MapFrameTransform): Vec3 {
  const c = Math.cos(t.yaw);
  const si = Math.sin(t.yaw);
  const dx = p.x - t.origin.x;
  const dy = p.y - t.origin.y;
  const dz = p.z - t.origin.z;
  // R(yaw)^T applied before un-scaling
  return {
    x: (c * dx + si * dy) / t.s,
    y: (-si * dx + c * dy) / t.s,
    z: dz / t.s,
  };
}

export function retargetAnchor(
  t: MapFrameTransform,
  changes: { origin?: Vec3; yaw?: number; s?: number },
): MapFrameTransform {
  const s = changes.s ?? t.s;
  if (!(s > 0)) throw new Error(`scale must be > 0, got ${s}`);
  return makeTransform(s, changes.yaw ?? t.yaw, changes.origin ?? t.origin);
}
