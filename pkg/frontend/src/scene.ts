// Scene graph: one instanced cube batch for the whole occupancy map, a red
// virtual drone at the latest odometry, a white draggable target drone, a
// trajectory line and a ground plane. Everything is a pure function of the
// latest complete snapshot revision, the latest odometry and the view
// transform -- no voxels survive a revision change.

import * as THREE from "three";

import { MapFrameTransform, Vec3, mapToWorld } from "./frames.js";
import { AssembledMap, TrajectoryMsg, heightColor } from "./protocol.js";

export const DRONE_COLOR = 0xd62020;
export const TARGET_COLOR = 0xf2f2f2;

export class ConsoleScene {
  readonly scene = new THREE.Scene();
  readonly droneMesh: THREE.Mesh;
  readonly targetMesh: THREE.Mesh;
  voxelMesh: THREE.InstancedMesh | null = null;
  private capacity = 0;
  private trajectoryLine: THREE.Line | null = null;
  private readonly cubeGeometry = new THREE.BoxGeometry(1, 1, 1);
  private readonly cubeMaterial = new THREE.MeshLambertMaterial();

  constructor() {
    this.scene.add(new THREE.AmbientLight(0xffffff, 0.7));
    const sun = new THREE.DirectionalLight(0xffffff, 1.2);
    sun.position.set(1, 2, 3);
    this.scene.add(sun);

    const ground = new THREE.GridHelper(2, 40, 0x555555, 0x2b2b2b);
    ground.rotation.x = Math.PI / 2; // Z-up
    ground.name = "ground";
    this.scene.add(ground);

    this.droneMesh = new THREE.Mesh(
      new THREE.SphereGeometry(1, 12, 8),
      new THREE.MeshLambertMaterial({ color: DRONE_COLOR }),
    );
    this.droneMesh.name = "drone";
    this.targetMesh = new THREE.Mesh(
      new THREE.SphereGeometry(1, 12, 8),
      new THREE.MeshLambertMaterial({ color: TARGET_COLOR }),
    );
    this.targetMesh.name = "target_drone";
    this.scene.add(this.droneMesh, this.targetMesh);
  }

  private ensureCapacity(count: number): THREE.InstancedMesh {
    if (this.voxelMesh && count <= this.capacity) return this.voxelMesh;
    if (this.voxelMesh) {
      this.scene.remove(this.voxelMesh);
      this.voxelMesh.dispose();
    }
    this.capacity = Math.max(30_000, count);
    this.voxelMesh = new THREE.InstancedMesh(this.cubeGeometry, this.cubeMaterial, this.capacity);
    this.voxelMesh.instanceMatrix.setUsage(THREE.DynamicDrawUsage);
    this.voxelMesh.name = "voxels";
    this.scene.add(this.voxelMesh);
    return this.voxelMesh;
  }

  /** Replace the voxel batch with one complete snapshot revision. */
  updateMap(map: AssembledMap, t: MapFrameTransform, zMin = 0.0, zMax = 3.0): void {
    const count = map.voxels.length / 3;
    const mesh = this.ensureCapacity(count);
    const size = map.resolution * t.s;
    const m = new THREE.Matrix4();
    const q = new THREE.Quaternion().setFromAxisAngle(new THREE.Vector3(0, 0, 1), t.yaw);
    const s = new THREE.Vector3(size, size, size);
    const pos = new THREE.Vector3();
    const color = new THREE.Color();
    for (let i = 0; i < count; i++) {
      const vx = map.voxels[3 * i];
      const vy = map.voxels[3 * i + 1];
      const vz = map.voxels[3 * i + 2];
      const w = mapToWorld(
        { x: (vx + 0.5) * map.resolution, y: (vy + 0.5) * map.resolution, z: (vz + 0.5) * map.resolution },
        t,
      );
      pos.set(w.x, w.y, w.z);
      m.compose(pos, q, s);
      mesh.setMatrixAt(i, m);
      const [r, g, b] = heightColor(vz, map.resolution, zMin, zMax);
      color.setRGB(r, g, b);
      mesh.setColorAt(i, color);
    }
    mesh.count = count;
    mesh.instanceMatrix.needsUpdate = true;
    if (mesh.instanceColor) mesh.instanceColor.needsUpdate = true;
  }

  updateDrone(mapPosition: Vec3, t: MapFrameTransform, droneRadiusM = 0.2): void {
    const w = mapToWorld(mapPosition, t);
    this.droneMesh.position.set(w.x, w.y, w.z);
    const r = droneRadiusM * t.s;
    this.droneMesh.scale.set(r, r, r);
  }

  /** The white drone lives in world coordinates while being dragged. */
  updateTargetWorld(world: Vec3, t: MapFrameTransform, droneRadiusM = 0.2): void {
    this.targetMesh.position.set(world.x, world.y, world.z);
    const r = droneRadiusM * t.s;
    this.targetMesh.scale.set(r, r, r);
  }

  setTargetHighlight(on: boolean): void {
    const prev = this.scene.getObjectByName("target_highlight");
    if (prev) this.scene.remove(prev);
    if (!on) return;
    const box = new THREE.BoxHelper(this.targetMesh, 0xffff00);
    box.name = "target_highlight";
    this.scene.add(box);
  }

  updateTrajectory(msg: TrajectoryMsg, t: MapFrameTransform): void {
    if (this.trajectoryLine) {
      this.scene.remove(this.trajectoryLine);
      this.trajectoryLine.geometry.dispose();
    }
    const pts: THREE.Vector3[] = [];
    for (let i = 0; i + 2 < msg.waypoints.length; i += 3) {
      const w = mapToWorld(
        { x: msg.waypoints[i], y: msg.waypoints[i + 1], z: msg.waypoints[i + 2] },
        t,
      );
      pts.push(new THREE.Vector3(w.x, w.y, w.z));
    }
    this.trajectoryLine = new THREE.Line(
      new THREE.BufferGeometry().setFromPoints(pts),
      new THREE.LineBasicMaterial({ color: 0x40c040 }),
    );
    this.trajectoryLine.name = "trajectory";
    this.scene.add(this.trajectoryLine);
  }

  voxelCount(): number {
    return this.voxelMesh ? this.voxelMesh.count : 0;
  }
}
