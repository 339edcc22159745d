// Desktop input: WASD + mouse fly camera, digit-selected joint jogs.
// Pose messages are throttled to POSE_RATE_HZ with a latest-wins slot, so
// holding a movement key saturates the cap instead of flooding the socket,
// and a frame with no input sends nothing at all.

import { encodeLine, type PoseMsg } from "./protocol";

export const POSE_RATE_HZ = 30;
export const JOG_LIMIT = 0.05; // per-command joint step bound, matches the follower

export class Keys {
  private down = new Set<string>();

  press(code: string): void {
    this.down.add(code);
  }

  release(code: string): void {
    this.down.delete(code);
  }

  clear(): void {
    this.down.clear();
  }

  has(code: string): boolean {
    return this.down.has(code);
  }
}

export class FlyCamera {
  position: number[];
  yaw = 0; // about world +z
  pitch = 0; // about camera x, clamped short of the poles
  speed = 1.5;

  constructor(position: number[] = [0, -3, 2]) {
    this.position = [...position];
  }

  look(dx: number, dy: number): void {
    this.yaw -= dx * 0.004;
    this.pitch -= dy * 0.004;
    const lim = Math.PI / 2 - 0.05;
    this.pitch = Math.max(-lim, Math.min(lim, this.pitch));
  }

  /** Returns true when a key actually moved the camera this frame. */
  move(keys: Keys, dt: number): boolean {
    let fwd = 0;
    let right = 0;
    let up = 0;
    if (keys.has("KeyW")) fwd += 1;
    if (keys.has("KeyS")) fwd -= 1;
    if (keys.has("KeyD")) right += 1;
    if (keys.has("KeyA")) right -= 1;
    if (keys.has("KeyR")) up += 1;
    if (keys.has("KeyF")) up -= 1;
    if (fwd === 0 && right === 0 && up === 0) return false;
    const c = Math.cos(this.yaw);
    const s = Math.sin(this.yaw);
    const step = this.speed * dt;
    this.position[0] += (fwd * c - right * s) * step;
    this.position[1] += (fwd * s + right * c) * step;
    this.position[2] += up * step;
    return true;
  }

  quaternion(): number[] {
    // yaw about +z composed with pitch about the yawed x axis
    const cy = Math.cos(this.yaw / 2);
    const sy = Math.sin(this.yaw / 2);
    const cp = Math.cos(this.pitch / 2);
    const sp = Math.sin(this.pitch / 2);
    return [cy * sp, sy * sp, sy * cp, cy * cp];
  }

  pose(): { position: number[]; quaternion: number[] } {
    return { position: [...this.position], quaternion: this.quaternion() };
  }
}

/** Joint step for this frame, or null when no jog key is held. */
export function jogFromKeys(keys: Keys, joint: number, dof: number, dt: number): number[] | null {
  let dir = 0;
  if (keys.has("KeyE")) dir += 1;
  if (keys.has("KeyQ")) dir -= 1;
  if (dir === 0 || joint < 0 || joint >= dof) return null;
  const dq = new Array<number>(dof).fill(0);
  dq[joint] = dir * 0.8 * dt;
  return dq;
}

export class CommandSender {
  private pending: PoseMsg | null = null;
  private nextPoseAt = -Infinity;

  constructor(private sendLine: (line: string) => void) {}

  /** Queue a camera pose.  Overwrites any unsent one: the server only ever
   * wants the newest pose, never a backlog. */
  offerPose(position: number[], quaternion: number[]): void {
    this.pending = { t: "pose", position, quaternion };
  }

  /** Called once per render frame with the current time in seconds. */
  flush(now: number): void {
    if (this.pending === null || now < this.nextPoseAt) return;
    this.sendLine(encodeLine(this.pending));
    this.pending = null;
    this.nextPoseAt = now + 1 / POSE_RATE_HZ;
  }

  jog(dq: number[]): void {
    const clamped = dq.map((v) => Math.max(-JOG_LIMIT, Math.min(JOG_LIMIT, v)));
    if (clamped.every((v) => v === 0)) return;
    this.sendLine(encodeLine({ t: "jog", dq: clamped }));
  }

  stop(): void {
    this.sendLine(encodeLine({ t: "stop" }));
  }
}
