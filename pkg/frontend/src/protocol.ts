// Wire types for the session socket.  The server speaks newline-delimited
// JSON over a websocket: every text frame carries one or more complete
// lines, each line one message tagged by its "t" field.  Field names here
// are the contract; renaming one breaks the server.

export interface JointSample {
  q: number[];
  t: number;
}

export interface MeshMsg {
  t: "mesh";
  version: number;
  url: string;
}

export interface ContactMsg {
  t: "contact";
  proxy_id: number;
  triangle: number;
  witness: number[];
  gap: number;
  normal: number[];
  force: number[];
  mesh_version: number;
  timestamp: number;
}

export interface StateMsg {
  t: "state";
  local: JointSample;
  echo: JointSample;
  latency: number;
  mesh_version: number;
}

export interface ErrorMsg {
  t: "error";
  message: string;
}

export type ServerMessage = MeshMsg | ContactMsg | StateMsg | ErrorMsg;

export interface PoseMsg {
  t: "pose";
  position: number[];
  quaternion: number[]; // x, y, z, w
}

export interface JogMsg {
  t: "jog";
  dq: number[];
}

export interface StopMsg {
  t: "stop";
}

export type ClientMessage = PoseMsg | JogMsg | StopMsg;

export class ProtocolError extends Error {}

function numArray(v: unknown, n?: number): number[] {
  if (!Array.isArray(v) || v.some((x) => typeof x !== "number")) {
    throw new ProtocolError("expected a numeric array");
  }
  if (n !== undefined && v.length !== n) {
    throw new ProtocolError(`expected ${n} components, got ${v.length}`);
  }
  return v as number[];
}

function num(v: unknown): number {
  if (typeof v !== "number" || !isFinite(v)) {
    throw new ProtocolError("expected a finite number");
  }
  return v;
}

function sample(v: unknown): JointSample {
  if (typeof v !== "object" || v === null) {
    throw new ProtocolError("expected a joint sample object");
  }
  const o = v as Record<string, unknown>;
  return { q: numArray(o.q), t: num(o.t) };
}

/** Parse one line from the server.  Throws ProtocolError on anything that
 * does not match the schema, so a garbled line never half-applies. */
export function parseServerLine(line: string): ServerMessage {
  let raw: unknown;
  try {
    raw = JSON.parse(line);
  } catch {
    throw new ProtocolError(`not JSON: ${line.slice(0, 80)}`);
  }
  if (typeof raw !== "object" || raw === null) {
    throw new ProtocolError("message is not an object");
  }
  const o = raw as Record<string, unknown>;
  switch (o.t) {
    case "mesh":
      if (typeof o.url !== "string") {
        throw new ProtocolError("mesh message without url");
      }
      return { t: "mesh", version: num(o.version), url: o.url };
    case "contact":
      return {
        t: "contact",
        proxy_id: num(o.proxy_id),
        triangle: num(o.triangle),
        witness: numArray(o.witness, 3),
        gap: num(o.gap),
        normal: numArray(o.normal, 3),
        force: numArray(o.force, 3),
        mesh_version: num(o.mesh_version),
        timestamp: num(o.timestamp),
      };
    case "state":
      return {
        t: "state",
        local: sample(o.local),
        echo: sample(o.echo),
        latency: num(o.latency),
        mesh_version: num(o.mesh_version),
      };
    case "error":
      return { t: "error", message: String(o.message) };
    default:
      throw new ProtocolError(`unknown message tag: ${String(o.t)}`);
  }
}

export function encodeLine(msg: ClientMessage): string {
  return JSON.stringify(msg) + "\n";
}

/** Reassemble newline-delimited messages from websocket frames.  Frames
 * normally end on a line boundary but nothing in the transport guarantees
 * it, so a trailing fragment is buffered until the rest arrives. */
export class LineSplitter {
  private tail = "";

  push(chunk: string): string[] {
    this.tail += chunk;
    const parts = this.tail.split("\n");
    this.tail = parts.pop() ?? "";
    return parts.filter((p) => p.length > 0);
  }
}
