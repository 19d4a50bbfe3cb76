/**
 * Export one OSLDEMB1 embedding file per benchmark stage, with rows in
 * stage-file document order and the document ids as the sidecar.
 */

import { promises as fs } from "node:fs";
import path from "node:path";

import { loadManifest, loadStageFile, stagePath, STAGES, StageName } from "./dataset.js";
import { createEncoder, Pooling } from "./encoder.js";
import { writeEmbeddingFile } from "./format.js";

export interface ExportConfig {
  manifest: string;
  model: string;
  pooling: Pooling;
  batchSize: number;
  outDir: string;
  maxLength: number;
}

export interface ExportResult {
  stage: StageName;
  path: string;
  documents: number;
  dim: number;
  truncated: number;
}

export function validateConfig(config: ExportConfig): void {
  if (config.batchSize < 1) {
    throw new Error("batch size must be >= 1");
  }
  if (config.maxLength < 1) {
    throw new Error("max sequence length must be >= 1");
  }
  if (config.pooling !== "cls" && config.pooling !== "mean") {
    throw new Error(`pooling must be "cls" or "mean", got ${JSON.stringify(config.pooling)}`);
  }
}

export async function exportEmbeddings(
  config: ExportConfig,
  log: (line: string) => void = () => {},
): Promise<ExportResult[]> {
  validateConfig(config);
  const manifest = await loadManifest(config.manifest);
  let truncated = 0;
  const encoder = await createEncoder(config.model, {
    pooling: config.pooling,
    maxLength: config.maxLength,
    onTruncate: (count) => {
      truncated += count;
    },
  });
  try {
    await fs.mkdir(config.outDir, { recursive: true });
    const results: ExportResult[] = [];
    for (const stage of STAGES) {
      const docs = await loadStageFile(stagePath(manifest, stage));
      if (docs.length === 0) {
        throw new Error(`stage ${stage} has no documents`);
      }
      const truncatedBefore = truncated;
      const vectors: Float32Array[] = [];
      for (let start = 0; start < docs.length; start += config.batchSize) {
        const batch = docs.slice(start, start + config.batchSize);
        const rows = await encoder.embed(batch.map((d) => d.text));
        vectors.push(...rows);
      }
      const outPath = path.join(config.outDir, `${stage}.emb`);
      await writeEmbeddingFile(
        outPath,
        vectors,
        docs.map((d) => d.id),
      );
      const stageTruncated = truncated - truncatedBefore;
      if (stageTruncated > 0) {
        log(`${stage}: truncated ${stageTruncated} document(s) to ${config.maxLength} tokens`);
      }
      log(`${stage}: ${docs.length} documents, d=${encoder.dim} -> ${outPath}`);
      results.push({
        stage,
        path: outPath,
        documents: docs.length,
        dim: encoder.dim,
        truncated: stageTruncated,
      });
    }
    return results;
  } finally {
    await encoder.close();
  }
}
