import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { afterEach, beforeEach, describe, expect, it } from "vitest";

import { HashEncoder } from "../src/encoder.js";
import { ExportError, ExportJob, exportClasses, exportCorpus, exportQueries } from "../src/export.js";
import { ManifestError, readManifest } from "../src/manifest.js";

let tmp: string;

beforeEach(() => {
  tmp = fs.mkdtempSync(path.join(os.tmpdir(), "xexp-"));
});

afterEach(() => {
  fs.rmSync(tmp, { recursive: true, force: true });
});

function makeJob(outDir: string): ExportJob {
  return {
    coarse: { name: "coarse", encoder: new HashEncoder("hash-v1", 32) },
    fine: { name: "fine", encoder: new HashEncoder("hash-v1", 48) },
    infer: { name: "infer", encoder: new HashEncoder("hash-v1", 24) },
    outDir,
  };
}

function writeImages(count: number): string[] {
  return Array.from({ length: count }, (_, i) => {
    const p = path.join(tmp, `img${i}.bin`);
    fs.writeFileSync(p, Buffer.from([i, i * 2 + 1, 17, i ^ 0x5a]));
    return p;
  });
}

function writeJsonlManifest(name: string, rows: object[]): string {
  const p = path.join(tmp, name);
  fs.writeFileSync(p, rows.map((r) => JSON.stringify(r)).join("\n") + "\n");
  return p;
}

function readHeader(file: string): { dim: number; count: bigint } {
  const buf = fs.readFileSync(file);
  expect(buf.subarray(0, 4).toString("ascii")).toBe("XMEB");
  expect(buf.readUInt32LE(4)).toBe(1);
  return { dim: buf.readUInt32LE(8), count: buf.readBigUInt64LE(12) };
}

function readJsonl(file: string): Record<string, unknown>[] {
  return fs
    .readFileSync(file, "utf8")
    .split("\n")
    .filter((l) => l.trim())
    .map((l) => JSON.parse(l));
}

describe("manifest reading", () => {
  it("reads CSV with optional columns left absent", () => {
    const p = path.join(tmp, "m.csv");
    fs.writeFileSync(p, "image,caption,label\na.png,a cat,\nb.png,a dog,dog\n");
    const rows = readManifest(p);
    expect(rows).toHaveLength(2);
    expect(rows[0]).toMatchObject({ id: 0, image: "a.png", caption: "a cat" });
    expect(rows[0].label).toBeUndefined();
    expect(rows[1].label).toBe("dog");
  });

  it("reads JSONL and keeps explicit ids", () => {
    const p = writeJsonlManifest("m.jsonl", [
      { id: 7, image: "a.png", caption: "x" },
      { image: "b.png", caption: "y" },
    ]);
    const rows = readManifest(p);
    expect(rows[0].id).toBe(7);
    expect(rows[1].id).toBe(1); // row number fallback
  });

  it("rejects duplicate ids, bad JSON, and empty manifests", () => {
    const dup = writeJsonlManifest("dup.jsonl", [
      { id: 1, image: "a.png" },
      { id: 1, image: "b.png" },
    ]);
    expect(() => readManifest(dup)).toThrow(/duplicate record id 1/);
    const bad = path.join(tmp, "bad.jsonl");
    fs.writeFileSync(bad, "{not json\n");
    expect(() => readManifest(bad)).toThrow(ManifestError);
    const empty = path.join(tmp, "empty.jsonl");
    fs.writeFileSync(empty, "\n");
    expect(() => readManifest(empty)).toThrow(/no records/);
  });
});

describe("corpus export", () => {
  it("writes one matrix per space with count equal to the manifest length", () => {
    const images = writeImages(4);
    const manifest = writeJsonlManifest(
      "corpus.jsonl",
      images.map((img, i) => ({ image: img, caption: `a photo number ${i}` })),
    );
    const out = path.join(tmp, "out");
    const result = exportCorpus(readManifest(manifest), makeJob(out));
    expect(result.files.map((f) => path.basename(f))).toEqual([
      "corpus.coarse.xmeb",
      "corpus.fine.xmeb",
      "corpus.infer.xmeb",
      "corpus.jsonl",
    ]);
    expect(readHeader(path.join(out, "corpus.coarse.xmeb"))).toEqual({ dim: 32, count: 4n });
    expect(readHeader(path.join(out, "corpus.fine.xmeb"))).toEqual({ dim: 48, count: 4n });
    expect(readHeader(path.join(out, "corpus.infer.xmeb"))).toEqual({ dim: 24, count: 4n });
    const meta = readJsonl(path.join(out, "corpus.jsonl"));
    expect(meta.map((m) => m.caption)).toEqual(images.map((_, i) => `a photo number ${i}`));
    expect(result.truncated).toBe(0);
    expect(result.warnings).toEqual([]);
  });

  it("flags over-length captions in the metadata, never silently", () => {
    const [img] = writeImages(1);
    const longCaption = Array.from({ length: 90 }, (_, i) => `word${i}`).join(" ");
    const manifest = writeJsonlManifest("corpus.jsonl", [
      { image: img, caption: longCaption },
    ]);
    const out = path.join(tmp, "out");
    const result = exportCorpus(readManifest(manifest), makeJob(out));
    const [entry] = readJsonl(path.join(out, "corpus.jsonl"));
    expect(entry.truncated).toBe(true);
    expect(entry.caption).toBe(longCaption); // caption text stays verbatim
    expect(result.truncated).toBe(1);
    expect(result.warnings[0]).toMatch(/1 caption/);
  });

  it("lists every unreadable image per record and writes nothing", () => {
    const [img] = writeImages(1);
    const manifest = writeJsonlManifest("corpus.jsonl", [
      { image: img, caption: "ok" },
      { image: path.join(tmp, "missing1.bin"), caption: "gone" },
      { image: path.join(tmp, "missing2.bin"), caption: "also gone" },
    ]);
    const out = path.join(tmp, "out");
    let error: ExportError | undefined;
    try {
      exportCorpus(readManifest(manifest), makeJob(out));
    } catch (exc) {
      error = exc as ExportError;
    }
    expect(error).toBeInstanceOf(ExportError);
    expect(error!.details).toHaveLength(2);
    expect(error!.message).toMatch(/record 1 .*missing1/);
    expect(error!.message).toMatch(/record 2 .*missing2/);
    expect(fs.existsSync(path.join(out, "corpus.coarse.xmeb"))).toBe(false);
  });

  it("requires captions on corpus records", () => {
    const [img] = writeImages(1);
    const manifest = writeJsonlManifest("corpus.jsonl", [{ image: img }]);
    expect(() => exportCorpus(readManifest(manifest), makeJob(path.join(tmp, "out")))).toThrow(
      /need a caption/,
    );
  });
});

describe("query export", () => {
  it("embeds the image in all three spaces and maps labels to class indices", () => {
    const images = writeImages(3);
    const manifest = writeJsonlManifest("q.jsonl", [
      { image: images[0], label: "dog" },
      { image: images[1], label: "cat" },
      { image: images[2], label: "dog" },
    ]);
    const out = path.join(tmp, "out");
    const result = exportQueries(readManifest(manifest), makeJob(out), ["cat", "dog"]);
    expect(result.warnings).toEqual([]);
    for (const [space, dim] of [["coarse", 32], ["fine", 48], ["infer", 24]] as const) {
      expect(readHeader(path.join(out, `queries.${space}.xmeb`))).toEqual({ dim, count: 3n });
    }
    const meta = readJsonl(path.join(out, "queries.jsonl"));
    expect(meta).toEqual([
      { id: 0, label: 1 },
      { id: 1, label: 0 },
      { id: 2, label: 1 },
    ]);
  });

  it("omits labels with a warning when the manifest has none", () => {
    const images = writeImages(2);
    const manifest = writeJsonlManifest(
      "q.jsonl",
      images.map((img) => ({ image: img })),
    );
    const out = path.join(tmp, "out");
    const result = exportQueries(readManifest(manifest), makeJob(out));
    expect(result.warnings[0]).toMatch(/labels omitted/);
    const meta = readJsonl(path.join(out, "queries.jsonl"));
    expect(meta).toEqual([{ id: 0 }, { id: 1 }]);
  });

  it("demands the class list when the manifest carries labels", () => {
    const [img] = writeImages(1);
    const manifest = writeJsonlManifest("q.jsonl", [{ image: img, label: "cat" }]);
    expect(() => exportQueries(readManifest(manifest), makeJob(path.join(tmp, "out")))).toThrow(
      /pass the class label list/,
    );
  });

  it("rejects labels outside the class list", () => {
    const [img] = writeImages(1);
    const manifest = writeJsonlManifest("q.jsonl", [{ image: img, label: "fox" }]);
    expect(() =>
      exportQueries(readManifest(manifest), makeJob(path.join(tmp, "out")), ["cat", "dog"]),
    ).toThrow(/'fox' is not in the class list/);
  });
});

describe("class export", () => {
  it("writes one prompt row per label and a class file the engine reads", () => {
    const out = path.join(tmp, "out");
    const result = exportClasses(["cat", "dog", "bird"], "a photo of a [CLS]", makeJob(out));
    expect(readHeader(path.join(out, "classes.infer.xmeb"))).toEqual({ dim: 24, count: 3n });
    const classes = JSON.parse(fs.readFileSync(path.join(out, "classes.json"), "utf8"));
    expect(classes).toEqual({
      labels: ["cat", "dog", "bird"],
      embeddings: { infer: "classes.infer.xmeb" },
    });
    expect(result.truncated).toBe(0);
  });

  it("substitutes [CLS] exactly once: each label changes the row", () => {
    const out = path.join(tmp, "out");
    exportClasses(["cat", "dog"], "a photo of a [CLS]", makeJob(out));
    const buf = fs.readFileSync(path.join(out, "classes.infer.xmeb"));
    const row0 = buf.subarray(20, 20 + 24 * 4);
    const row1 = buf.subarray(20 + 24 * 4);
    expect(row0.equals(row1)).toBe(false);
    // oracle: the row equals encoding the substituted prompt directly
    const direct = new HashEncoder("hash-v1", 24).encodeText("infer", "a photo of a cat").embedding;
    const expected = Buffer.alloc(24 * 4);
    direct.forEach((v, i) => expected.writeFloatLE(v, i * 4));
    expect(row0.equals(expected)).toBe(true);
  });

  it("rejects templates without exactly one [CLS]", () => {
    const job = makeJob(path.join(tmp, "out"));
    expect(() => exportClasses(["a", "b"], "no marker here", job)).toThrow(/found 0/);
    expect(() => exportClasses(["a", "b"], "[CLS] and [CLS]", job)).toThrow(/found 2/);
  });

  it("rejects duplicate or lonely labels", () => {
    const job = makeJob(path.join(tmp, "out"));
    expect(() => exportClasses(["a", "a"], "a [CLS]", job)).toThrow(/unique/);
    expect(() => exportClasses(["solo"], "a [CLS]", job)).toThrow(/at least 2/);
  });
});
