// Live pose panel text. The panel shows map-frame coordinates so what the
// operator reads matches what gets published.

import { Vec3 } from "./frames.js";

export function formatMapPosition(p: Vec3): string {
  return `x ${p.x.toFixed(3)}  y ${p.y.toFixed(3)}  z ${p.z.toFixed(3)}`;
}

export function formatPosePanel(drone: Vec3 | null, target: Vec3 | null, state: string): string {
  const lines = [`state: ${state}`];
  lines.push(drone ? `drone:  ${formatMapPosition(drone)}` : "drone:  --");
  if (target) lines.push(`target: ${formatMapPosition(target)}`);
  return lines.join("\n");
}
