/**
 * OSLDEMB1 binary embedding files.
 *
 * Layout: 8 ASCII magic bytes "OSLDEMB1", u32 LE row count n, u32 LE
 * dimension d, n*d float32 LE row-major values, u32 LE id-section byte
 * length, JSON array of n id strings (UTF-8).
 */

import { promises as fs } from "node:fs";
import path from "node:path";

export const MAGIC = Buffer.from("OSLDEMB1", "ascii");

export interface EmbeddingFile {
  n: number;
  d: number;
  data: Float32Array; // row-major, length n*d
  ids: string[];
}

export function encodeEmbeddingFile(vectors: Float32Array[], ids: string[]): Buffer {
  if (vectors.length === 0) {
    throw new Error("refusing to encode an empty embedding file");
  }
  if (vectors.length !== ids.length) {
    throw new Error(`${vectors.length} vectors but ${ids.length} ids`);
  }
  const d = vectors[0].length;
  if (d < 2) {
    throw new Error("embedding dimension must be >= 2");
  }
  for (const [i, row] of vectors.entries()) {
    if (row.length !== d) {
      throw new Error(`row ${i} has dimension ${row.length}, expected ${d}`);
    }
    for (const value of row) {
      if (!Number.isFinite(value)) {
        throw new Error(`non-finite value in row ${i} (${ids[i]})`);
      }
    }
  }

  const header = Buffer.alloc(8);
  header.writeUInt32LE(vectors.length, 0);
  header.writeUInt32LE(d, 4);

  const payload = Buffer.alloc(vectors.length * d * 4);
  for (const [i, row] of vectors.entries()) {
    for (let j = 0; j < d; j++) {
      payload.writeFloatLE(row[j], (i * d + j) * 4);
    }
  }

  const idBlob = Buffer.from(JSON.stringify(ids), "utf-8");
  const idLen = Buffer.alloc(4);
  idLen.writeUInt32LE(idBlob.length, 0);

  return Buffer.concat([MAGIC, header, payload, idLen, idBlob]);
}

/** Write via a temp file and rename so readers never see partial output. */
export async function writeEmbeddingFile(
  filePath: string,
  vectors: Float32Array[],
  ids: string[],
): Promise<void> {
  const blob = encodeEmbeddingFile(vectors, ids);
  const tmp = path.join(
    path.dirname(filePath),
    `.${path.basename(filePath)}.tmp-${process.pid}`,
  );
  await fs.writeFile(tmp, blob);
  await fs.rename(tmp, filePath);
}

export function decodeEmbeddingFile(blob: Buffer): EmbeddingFile {
  if (blob.length < 16) {
    throw new Error("file too short for an OSLDEMB1 header");
  }
  if (!blob.subarray(0, 8).equals(MAGIC)) {
    throw new Error(`bad magic ${JSON.stringify(blob.subarray(0, 8).toString("latin1"))}`);
  }
  const n = blob.readUInt32LE(8);
  const d = blob.readUInt32LE(12);
  if (n === 0 || d === 0) {
    throw new Error(`zero row count or dimension (n=${n}, d=${d})`);
  }
  const need = n * d * 4;
  if (blob.length < 16 + need + 4) {
    throw new Error("truncated payload");
  }
  const data = new Float32Array(n * d);
  for (let i = 0; i < n * d; i++) {
    data[i] = blob.readFloatLE(16 + i * 4);
  }
  const idLen = blob.readUInt32LE(16 + need);
  const idBlob = blob.subarray(20 + need, 20 + need + idLen);
  if (idBlob.length !== idLen) {
    throw new Error("truncated id section");
  }
  const ids = JSON.parse(idBlob.toString("utf-8"));
  if (!Array.isArray(ids) || ids.length !== n) {
    throw new Error(`id section has ${ids.length} ids, expected ${n}`);
  }
  return { n, d, data, ids };
}

export async function readEmbeddingFile(filePath: string): Promise<EmbeddingFile> {
  return decodeEmbeddingFile(await fs.readFile(filePath));
}
