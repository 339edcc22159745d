// Minimal OBJ reader for the meshes the session server exports: v / vt / f
// records, triangles (larger faces are fan-triangulated), 1-based absolute
// indices.  Anything outside that subset is a hard error rather than a
// silently wrong mesh.

export interface ParsedMesh {
  positions: Float32Array; // xyz per vertex
  indices: Uint32Array; // three per triangle
  vertexCount: number;
  triangleCount: number;
}

function faceVertex(token: string, vertexCount: number): number {
  const head = token.split("/")[0];
  const idx = Number(head);
  if (!Number.isInteger(idx) || idx === 0) {
    throw new Error(`bad face index: ${token}`);
  }
  if (idx < 0 || idx > vertexCount) {
    throw new Error(`face index out of range: ${token}`);
  }
  return idx - 1;
}

export function parseObj(text: string): ParsedMesh {
  const positions: number[] = [];
  const indices: number[] = [];
  for (const rawLine of text.split("\n")) {
    const line = rawLine.trim();
    if (line === "" || line.startsWith("#")) continue;
    const parts = line.split(/\s+/);
    const tag = parts[0];
    if (tag === "v") {
      if (parts.length < 4) throw new Error(`bad vertex line: ${line}`);
      positions.push(Number(parts[1]), Number(parts[2]), Number(parts[3]));
    } else if (tag === "f") {
      if (parts.length < 4) throw new Error(`bad face line: ${line}`);
      const n = positions.length / 3;
      const first = faceVertex(parts[1], n);
      for (let i = 2; i + 1 < parts.length; i++) {
        indices.push(first, faceVertex(parts[i], n), faceVertex(parts[i + 1], n));
      }
    }
    // vt, vn, o, g, s, usemtl, mtllib: irrelevant to geometry, skipped
  }
  if (positions.some((v) => !isFinite(v))) {
    throw new Error("non-finite vertex coordinate");
  }
  return {
    positions: Float32Array.from(positions),
    indices: Uint32Array.from(indices),
    vertexCount: positions.length / 3,
    triangleCount: indices.length / 3,
  };
}
