import assert from "node:assert/strict";
import { test } from "node:test";
import { promises as fs } from "node:fs";
import os from "node:os";
import path from "node:path";

import { loadManifest, loadStageFile, stagePath } from "../src/dataset.js";

async function tmpFile(name: string, content: string | Buffer): Promise<string> {
  const dir = await fs.mkdtemp(path.join(os.tmpdir(), "ds-"));
  const file = path.join(dir, name);
  await fs.writeFile(file, content);
  return file;
}

test("stage file preserves order and accepts CRLF", async () => {
  const file = await tmpFile(
    "s.jsonl",
    '{"id":"b","text":"second first","label":"x"}\r\n' +
      '{"id":"a","text":"first second","label":"y"}\n',
  );
  const docs = await loadStageFile(file);
  assert.deepEqual(
    docs.map((d) => d.id),
    ["b", "a"],
  );
});

test("stage file rejects duplicates naming both lines", async () => {
  const file = await tmpFile(
    "s.jsonl",
    '{"id":"a7","text":"x","label":"l"}\n{"id":"a7","text":"y","label":"l"}\n',
  );
  await assert.rejects(loadStageFile(file), /a7.*lines 1 and 2/);
});

test("stage file rejects missing fields and empty text", async () => {
  const missing = await tmpFile("s.jsonl", '{"id":"a","label":"l"}\n');
  await assert.rejects(loadStageFile(missing), /line 1/);
  const empty = await tmpFile("s.jsonl", '{"id":"a","text":"  ","label":"l"}\n');
  await assert.rejects(loadStageFile(empty), /empty text/);
});

test("stage file rejects BOM", async () => {
  const file = await tmpFile(
    "s.jsonl",
    Buffer.concat([
      Buffer.from([0xef, 0xbb, 0xbf]),
      Buffer.from('{"id":"a","text":"x","label":"l"}\n'),
    ]),
  );
  await assert.rejects(loadStageFile(file), /BOM/);
});

test("manifest loads and resolves relative stage paths", async () => {
  const dir = await fs.mkdtemp(path.join(os.tmpdir(), "mf-"));
  const manifest = {
    known_classes: ["a", "b"],
    stages: ["train", "val", "test1", "test2", "test3"].map((name) => ({
      name,
      path: `${name}.jsonl`,
      classes: ["a", "b"],
    })),
    language: "en",
    seed: 7,
  };
  const manifestPath = path.join(dir, "manifest.json");
  await fs.writeFile(manifestPath, JSON.stringify(manifest));
  const loaded = await loadManifest(manifestPath);
  assert.deepEqual(loaded.knownClasses, ["a", "b"]);
  assert.equal(loaded.seed, 7);
  assert.equal(stagePath(loaded, "test2"), path.join(dir, "test2.jsonl"));
});

test("manifest rejects missing fields and wrong stage lists", async () => {
  const missing = await tmpFile("m.json", JSON.stringify({ stages: [] }));
  await assert.rejects(loadManifest(missing), /known_classes/);
  const wrong = await tmpFile(
    "m.json",
    JSON.stringify({
      known_classes: [],
      stages: [{ name: "train", path: "t", classes: [] }],
      language: "en",
      seed: 0,
    }),
  );
  await assert.rejects(loadManifest(wrong), /stages must be/);
});
