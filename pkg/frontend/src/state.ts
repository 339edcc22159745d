// Client-side session state, updated only by applyMessage / meshLoaded /
// the camera setter.  Two invariants are enforced here rather than trusted:
// the rendered mesh version never exceeds the latest published one, and the
// ghost (echoed follower) timestamp never runs ahead of the local twin.

import type { ContactMsg, JointSample, ServerMessage } from "./protocol";

export type Connection = "connecting" | "live" | "lost";

export interface CameraPose {
  position: number[];
  quaternion: number[]; // x, y, z, w
}

export interface ContactMarker {
  seq: number; // assigned per received contact message, 1:1
  proxyId: number;
  triangle: number;
  witness: number[];
  gap: number;
  normal: number[];
  force: number[];
  meshVersion: number;
  timestamp: number;
}

export interface UiSessionState {
  connection: Connection;
  camera: CameraPose;
  local: JointSample | null; // commanded twin
  echo: JointSample | null; // follower echo, rendered as the ghost
  latency: number;
  latestVersion: number; // newest version the server has published
  renderedVersion: number; // version of the geometry actually on screen
  pendingMeshUrl: string | null; // set while latestVersion is not loaded yet
  contacts: ContactMarker[];
  contactsSeen: number; // total contact messages ever applied
  lastError: string | null;
  clock: number; // newest session timestamp heard from the server
}

// markers outlive their message briefly so brief contacts stay visible,
// and the queue is capped so a contact storm cannot grow without bound
export const MARKER_TTL = 0.75;
export const MARKER_CAP = 64;

export function initialState(): UiSessionState {
  return {
    connection: "connecting",
    camera: { position: [0, -3, 2], quaternion: [0, 0, 0, 1] },
    local: null,
    echo: null,
    latency: 0,
    latestVersion: 0,
    renderedVersion: 0,
    pendingMeshUrl: null,
    contacts: [],
    contactsSeen: 0,
    lastError: null,
    clock: 0,
  };
}

function pruned(contacts: ContactMarker[], clock: number): ContactMarker[] {
  const live = contacts.filter((c) => clock - c.timestamp <= MARKER_TTL);
  return live.length > MARKER_CAP ? live.slice(live.length - MARKER_CAP) : live;
}

function applyContact(s: UiSessionState, m: ContactMsg): UiSessionState {
  const clock = Math.max(s.clock, m.timestamp);
  const marker: ContactMarker = {
    seq: s.contactsSeen,
    proxyId: m.proxy_id,
    triangle: m.triangle,
    witness: m.witness,
    gap: m.gap,
    normal: m.normal,
    force: m.force,
    meshVersion: m.mesh_version,
    timestamp: m.timestamp,
  };
  return {
    ...s,
    clock,
    contacts: pruned([...s.contacts, marker], clock),
    contactsSeen: s.contactsSeen + 1,
  };
}

export function applyMessage(s: UiSessionState, m: ServerMessage): UiSessionState {
  switch (m.t) {
    case "mesh": {
      if (m.version <= s.latestVersion) return s; // stale announcement
      return { ...s, latestVersion: m.version, pendingMeshUrl: m.url };
    }
    case "contact":
      return applyContact(s, m);
    case "state": {
      const local = m.local;
      // clamp rather than reject: a skewed echo should degrade to "no lead
      // shown", not tear down the session
      const echo = { q: m.echo.q, t: Math.min(m.echo.t, local.t) };
      const clock = Math.max(s.clock, local.t);
      return {
        ...s,
        local,
        echo,
        latency: m.latency,
        latestVersion: Math.max(s.latestVersion, m.mesh_version),
        contacts: pruned(s.contacts, clock),
        clock,
      };
    }
    case "error":
      return { ...s, lastError: m.message };
  }
}

/** Record that mesh geometry for `version` is now on screen.  Out-of-order
 * fetch completions are ignored; the rendered version only moves forward
 * and never past the latest published one. */
export function meshLoaded(s: UiSessionState, version: number): UiSessionState {
  if (version <= s.renderedVersion) return s;
  const rendered = Math.min(version, s.latestVersion);
  return {
    ...s,
    renderedVersion: rendered,
    pendingMeshUrl: rendered >= s.latestVersion ? null : s.pendingMeshUrl,
  };
}

export function setConnection(s: UiSessionState, c: Connection): UiSessionState {
  return s.connection === c ? s : { ...s, connection: c };
}

export function setCamera(s: UiSessionState, camera: CameraPose): UiSessionState {
  return { ...s, camera };
}
