/**
 * Readers for the benchmark manifest (JSON) and stage files (JSON lines
 * with string fields id, text, label; no BOM; LF or CRLF).
 */

import { promises as fs } from "node:fs";
import path from "node:path";

export const STAGES = ["train", "val", "test1", "test2", "test3"] as const;
export type StageName = (typeof STAGES)[number];

export interface StageDoc {
  id: string;
  text: string;
  label: string;
}

export interface StageEntry {
  name: StageName;
  path: string;
  classes: string[];
}

export interface Manifest {
  knownClasses: string[];
  stages: StageEntry[];
  language: string;
  seed: number;
  root: string;
}

export async function loadManifest(manifestPath: string): Promise<Manifest> {
  const raw = JSON.parse(await fs.readFile(manifestPath, "utf-8"));
  for (const key of ["known_classes", "stages", "language", "seed"]) {
    if (!(key in raw)) {
      throw new Error(`manifest is missing field ${JSON.stringify(key)}`);
    }
  }
  const stages: StageEntry[] = raw.stages.map((entry: any) => {
    for (const key of ["name", "path", "classes"]) {
      if (!(key in entry)) {
        throw new Error(`manifest stage entry is missing ${JSON.stringify(key)}`);
      }
    }
    return { name: entry.name, path: entry.path, classes: entry.classes };
  });
  const names = stages.map((s) => s.name);
  if (JSON.stringify(names) !== JSON.stringify(STAGES)) {
    throw new Error(`manifest stages must be ${STAGES.join(", ")}; got ${names.join(", ")}`);
  }
  return {
    knownClasses: raw.known_classes,
    stages,
    language: String(raw.language),
    seed: Number(raw.seed),
    root: path.dirname(path.resolve(manifestPath)),
  };
}

export function stagePath(manifest: Manifest, name: StageName): string {
  const entry = manifest.stages.find((s) => s.name === name);
  if (!entry) {
    throw new Error(`no stage named ${name}`);
  }
  return path.isAbsolute(entry.path) ? entry.path : path.join(manifest.root, entry.path);
}

export async function loadStageFile(filePath: string): Promise<StageDoc[]> {
  const blob = await fs.readFile(filePath);
  if (blob.length >= 3 && blob[0] === 0xef && blob[1] === 0xbb && blob[2] === 0xbf) {
    throw new Error(`${filePath}: BOM not allowed in stage files`);
  }
  const docs: StageDoc[] = [];
  const seen = new Map<string, number>();
  const lines = blob.toString("utf-8").split("\n");
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].replace(/\r$/, "");
    if (!line.trim()) {
      continue;
    }
    let record: any;
    try {
      record = JSON.parse(line);
    } catch {
      throw new Error(`${filePath}: line ${i + 1}: malformed JSON`);
    }
    for (const key of ["id", "text", "label"]) {
      if (typeof record[key] !== "string") {
        throw new Error(`${filePath}: line ${i + 1}: missing string field ${JSON.stringify(key)}`);
      }
    }
    if (!record.text.trim()) {
      throw new Error(`${filePath}: line ${i + 1}: empty text`);
    }
    const previous = seen.get(record.id);
    if (previous !== undefined) {
      throw new Error(
        `${filePath}: duplicate id ${JSON.stringify(record.id)} at lines ${previous} and ${i + 1}`,
      );
    }
    seen.set(record.id, i + 1);
    docs.push({ id: record.id, text: record.text, label: record.label });
  }
  return docs;
}
