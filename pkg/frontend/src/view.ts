// Pure description of one rendered frame, derived from UiSessionState.
// The renderer draws exactly this and nothing else, which is what makes
// "every marker on screen came from a contact message" checkable in tests.

import type { UiSessionState } from "./state";

export interface MarkerModel {
  key: number; // the originating message's sequence number
  position: number[];
  arrowDir: number[] | null; // null for zero-force proximity hits
  arrowLength: number;
}

export interface TwinModel {
  q: number[];
  ghost: boolean;
}

export interface FrameModel {
  banner: string | null;
  frozen: boolean;
  meshVersion: number; // version indicator shown in the HUD
  loadingVersion: number | null; // newer version still in flight, if any
  latencyMs: number;
  twin: TwinModel | null;
  echo: TwinModel | null;
  markers: MarkerModel[];
}

function markerOf(c: UiSessionState["contacts"][number]): MarkerModel {
  const f = c.force;
  const mag = Math.hypot(f[0], f[1], f[2]);
  if (mag < 1e-12) {
    return { key: c.seq, position: c.witness, arrowDir: null, arrowLength: 0 };
  }
  return {
    key: c.seq,
    position: c.witness,
    arrowDir: [f[0] / mag, f[1] / mag, f[2] / mag],
    arrowLength: 0.15 + 0.35 * Math.min(mag, 1),
  };
}

export function frameModel(s: UiSessionState): FrameModel {
  const lost = s.connection === "lost";
  return {
    banner: lost ? "connection lost, reconnecting" : null,
    frozen: lost,
    meshVersion: s.renderedVersion,
    loadingVersion: s.latestVersion > s.renderedVersion ? s.latestVersion : null,
    latencyMs: s.latency * 1000,
    twin: s.local ? { q: s.local.q, ghost: false } : null,
    echo: s.echo ? { q: s.echo.q, ghost: true } : null,
    markers: s.contacts.map(markerOf),
  };
}
