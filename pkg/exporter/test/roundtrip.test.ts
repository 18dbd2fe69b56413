import { spawnSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { HashEncoder } from "../src/encoder.js";
import { ExportJob, exportClasses, exportCorpus, exportQueries } from "../src/export.js";
import { readManifest } from "../src/manifest.js";

// End-to-end contract: a 10-image toy export must load in the engine with
// zero warnings and round-trip through its retrieve command.

const LABELS = ["cat", "dog", "bird", "fish"];
let tmp: string;
let outDir: string;
let captions: string[];

function makeJob(dir: string): ExportJob {
  return {
    coarse: { name: "coarse", encoder: new HashEncoder("hash-v1", 32) },
    fine: { name: "fine", encoder: new HashEncoder("hash-v1", 48) },
    infer: { name: "infer", encoder: new HashEncoder("hash-v1", 24) },
    outDir: dir,
  };
}

function writeToyInputs(dir: string): { corpus: string; queries: string } {
  const imageDir = path.join(dir, "images");
  fs.mkdirSync(imageDir, { recursive: true });
  const corpusRows = Array.from({ length: 10 }, (_, i) => {
    const image = path.join(imageDir, `corpus${i}.bin`);
    fs.writeFileSync(image, Buffer.from([i, 3 * i + 7, 0xaa, i * i]));
    return { image, caption: `a photo of a ${LABELS[i % 4]}, item ${i}` };
  });
  const queryRows = Array.from({ length: 5 }, (_, i) => {
    const image = path.join(imageDir, `query${i}.bin`);
    fs.writeFileSync(image, Buffer.from([0x51, i, 2 * i, 0x0f]));
    return { image, label: LABELS[i % 4] };
  });
  const corpus = path.join(dir, "corpus_manifest.jsonl");
  fs.writeFileSync(corpus, corpusRows.map((r) => JSON.stringify(r)).join("\n") + "\n");
  const queries = path.join(dir, "query_manifest.jsonl");
  fs.writeFileSync(queries, queryRows.map((r) => JSON.stringify(r)).join("\n") + "\n");
  captions = corpusRows.map((r) => r.caption);
  return { corpus, queries };
}

function exportAll(dir: string, manifests: { corpus: string; queries: string }): void {
  const job = makeJob(dir);
  exportCorpus(readManifest(manifests.corpus), job);
  exportQueries(readManifest(manifests.queries), job, LABELS);
  exportClasses(LABELS, "a photo of a [CLS]", job);
}

function writeEngineConfig(dir: string): string {
  const config = [
    "[engine]",
    "mode = modal",
    "seeds = 0",
    "",
    "[space:coarse]",
    "dim = 32",
    "normalized = true",
    "",
    "[space:fine]",
    "dim = 48",
    "normalized = true",
    "",
    "[space:infer]",
    "dim = 24",
    "normalized = true",
    "",
    "[corpus]",
    "metadata = corpus.jsonl",
    "embedding.coarse = corpus.coarse.xmeb",
    "embedding.fine = corpus.fine.xmeb",
    "embedding.infer = corpus.infer.xmeb",
    "",
    "[queries]",
    "metadata = queries.jsonl",
    "embedding.coarse = queries.coarse.xmeb",
    "embedding.fine = queries.fine.xmeb",
    "embedding.infer = queries.infer.xmeb",
    "",
    "[classes]",
    "path = classes.json",
    "",
    "[retrieval]",
    "coarse_space = coarse",
    "fine_space = fine",
    "query_fine_space = fine",
    "n = 8",
    "k = 4",
    "",
    "[inference]",
    "space = infer",
    "temperature = 100.0",
    "",
  ].join("\n");
  const p = path.join(dir, "config.ini");
  fs.writeFileSync(p, config);
  return p;
}

// -W error::Warning turns any loader warning into a hard failure
function engine(args: string[]): ReturnType<typeof spawnSync> {
  return spawnSync("python3", ["-W", "error::Warning", "-m", "xmodal.cli", ...args], {
    encoding: "utf8",
  });
}

beforeAll(() => {
  tmp = fs.mkdtempSync(path.join(os.tmpdir(), "xexp-rt-"));
  outDir = path.join(tmp, "export");
  exportAll(outDir, writeToyInputs(tmp));
  writeEngineConfig(outDir);
});

afterAll(() => {
  fs.rmSync(tmp, { recursive: true, force: true });
});

describe("engine round trip", () => {
  it("retrieve consumes the export cleanly and echoes captions verbatim", () => {
    const result = engine(["retrieve", "--config", path.join(outDir, "config.ini")]);
    expect(result.status).toBe(0);
    expect(result.stderr).toBe(""); // zero warnings from the loader
    const lines = (result.stdout as string).split("\n").filter((l) => l.trim());
    expect(lines).toHaveLength(5);
    for (const line of lines) {
      const payload = JSON.parse(line);
      expect(payload.captions).toHaveLength(4);
      const scores = payload.captions.map((c: { score: number }) => c.score);
      expect([...scores].sort((a, b) => b - a)).toEqual(scores);
      for (const cap of payload.captions) {
        expect(captions).toContain(cap.caption);
      }
    }
  });

  it("eval runs end to end on the exported fixture", () => {
    const result = engine(["eval", "--config", path.join(outDir, "config.ini")]);
    expect(result.status).toBe(0);
    expect(result.stderr).toBe("");
    expect(result.stdout).toMatch(/ens_acc/);
  });

  it("a second export is byte-identical", () => {
    const again = path.join(tmp, "export2");
    exportAll(again, {
      corpus: path.join(tmp, "corpus_manifest.jsonl"),
      queries: path.join(tmp, "query_manifest.jsonl"),
    });
    for (const name of fs.readdirSync(again)) {
      const a = fs.readFileSync(path.join(outDir, name));
      const b = fs.readFileSync(path.join(again, name));
      expect(b.equals(a), `${name} differs between exports`).toBe(true);
    }
  });
});
