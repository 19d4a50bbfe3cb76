#!/usr/bin/env node
/**
 * embed-export --manifest M --model NAME --out DIR
 *              [--pooling cls|mean] [--batch 32] [--max-length 512]
 */

import process from "node:process";

import { exportEmbeddings, ExportConfig } from "./export.js";
import { Pooling } from "./encoder.js";

const USAGE = `usage: embed-export --manifest M --model NAME --out DIR
                    [--pooling cls|mean] [--batch 32] [--max-length 512]`;

function parseArgs(argv: string[]): ExportConfig {
  const values = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    const value = argv[i + 1];
    if (!key.startsWith("--") || value === undefined) {
      throw new Error(USAGE);
    }
    values.set(key.slice(2), value);
  }
  for (const required of ["manifest", "model", "out"]) {
    if (!values.has(required)) {
      throw new Error(USAGE);
    }
  }
  return {
    manifest: values.get("manifest")!,
    model: values.get("model")!,
    outDir: values.get("out")!,
    pooling: (values.get("pooling") ?? "cls") as Pooling,
    batchSize: Number(values.get("batch") ?? 32),
    maxLength: Number(values.get("max-length") ?? 512),
  };
}

async function main(): Promise<number> {
  let config: ExportConfig;
  try {
    config = parseArgs(process.argv.slice(2));
  } catch (err) {
    console.error((err as Error).message);
    return 1;
  }
  try {
    await exportEmbeddings(config, (line) => console.log(line));
    return 0;
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 2;
  }
}

main().then((code) => {
  process.exitCode = code;
});
