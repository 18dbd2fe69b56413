import * as fs from "node:fs";
import * as path from "node:path";

import { Encoder } from "./encoder.js";
import { ManifestRow } from "./manifest.js";
import { writeXmeb } from "./xmeb.js";

// A space role binds a space name (the key the engine config declares) to the
// encoder that produces vectors for it.
export interface SpaceModel {
  name: string;
  encoder: Encoder;
}

export interface ExportJob {
  coarse: SpaceModel; // image vectors for candidate retrieval
  fine: SpaceModel; // caption vectors for rescoring
  infer: SpaceModel; // class-prompt/caption/image vectors for classification
  outDir: string;
}

export interface ExportResult {
  files: string[];
  warnings: string[];
  truncated: number; // captions over the context length, flagged in metadata
}

export class ExportError extends Error {
  constructor(
    message: string,
    public readonly details: string[] = [],
  ) {
    super(details.length ? `${message}\n  ${details.join("\n  ")}` : message);
  }
}

function readImage(row: ManifestRow, errors: string[]): Buffer | undefined {
  try {
    return fs.readFileSync(row.image);
  } catch (exc) {
    errors.push(`record ${row.id} (${row.image}): ${(exc as Error).message}`);
    return undefined;
  }
}

function writeJsonl(outPath: string, entries: object[]): void {
  fs.writeFileSync(outPath, entries.map((e) => JSON.stringify(e)).join("\n") + "\n");
}

function outFile(job: ExportJob, name: string, files: string[]): string {
  const p = path.join(job.outDir, name);
  files.push(p);
  return p;
}

// Corpus: image -> coarse space; caption -> fine and inference spaces.
export function exportCorpus(rows: ManifestRow[], job: ExportJob): ExportResult {
  fs.mkdirSync(job.outDir, { recursive: true });
  const errors: string[] = [];
  const coarseRows: Float32Array[] = [];
  const fineRows: Float32Array[] = [];
  const inferRows: Float32Array[] = [];
  const metadata: object[] = [];
  let truncated = 0;

  for (const row of rows) {
    if (!row.caption) {
      errors.push(`record ${row.id}: corpus records need a caption`);
      continue;
    }
    const bytes = readImage(row, errors);
    if (bytes === undefined) continue;
    coarseRows.push(job.coarse.encoder.encodeBytes(job.coarse.name, bytes));
    const fine = job.fine.encoder.encodeText(job.fine.name, row.caption);
    const infer = job.infer.encoder.encodeText(job.infer.name, row.caption);
    fineRows.push(fine.embedding);
    inferRows.push(infer.embedding);
    const entry: Record<string, unknown> = { id: row.id, caption: row.caption };
    if (fine.tokens.truncated) {
      entry.truncated = true; // loud in metadata, never silent
      truncated += 1;
    }
    metadata.push(entry);
  }
  if (errors.length > 0) {
    throw new ExportError("corpus export failed", errors);
  }

  const files: string[] = [];
  writeXmeb(outFile(job, `corpus.${job.coarse.name}.xmeb`, files), job.coarse.encoder.dim, coarseRows);
  writeXmeb(outFile(job, `corpus.${job.fine.name}.xmeb`, files), job.fine.encoder.dim, fineRows);
  writeXmeb(outFile(job, `corpus.${job.infer.name}.xmeb`, files), job.infer.encoder.dim, inferRows);
  writeJsonl(outFile(job, "corpus.jsonl", files), metadata);
  const warnings =
    truncated > 0 ? [`${truncated} caption(s) exceeded the context length and were truncated`] : [];
  return { files, warnings, truncated };
}

// Queries: the test image is embedded in all three spaces; labels, when the
// manifest carries them, are mapped to class indices against classLabels.
export function exportQueries(
  rows: ManifestRow[],
  job: ExportJob,
  classLabels?: string[],
): ExportResult {
  fs.mkdirSync(job.outDir, { recursive: true });
  const errors: string[] = [];
  const warnings: string[] = [];
  const spaces = [job.coarse, job.fine, job.infer];
  const matrixRows: Float32Array[][] = spaces.map(() => []);
  const metadata: object[] = [];

  const hasLabels = rows.some((row) => row.label !== undefined);
  if (hasLabels && classLabels === undefined) {
    throw new ExportError("manifest has a label column; pass the class label list to map it");
  }
  if (!hasLabels) {
    warnings.push("manifest has no label column; labels omitted from query metadata");
  }

  for (const row of rows) {
    const bytes = readImage(row, errors);
    if (bytes === undefined) continue;
    let label: number | undefined;
    if (row.label !== undefined) {
      const idx = classLabels!.indexOf(row.label);
      if (idx < 0) {
        errors.push(`record ${row.id}: label '${row.label}' is not in the class list`);
        continue;
      }
      label = idx;
    }
    spaces.forEach((space, s) => {
      matrixRows[s].push(space.encoder.encodeBytes(space.name, bytes));
    });
    metadata.push(label === undefined ? { id: row.id } : { id: row.id, label });
  }
  if (errors.length > 0) {
    throw new ExportError("query export failed", errors);
  }

  const files: string[] = [];
  spaces.forEach((space, s) => {
    writeXmeb(outFile(job, `queries.${space.name}.xmeb`, files), space.encoder.dim, matrixRows[s]);
  });
  writeJsonl(outFile(job, "queries.jsonl", files), metadata);
  return { files, warnings, truncated: 0 };
}

// Class set: one prompt per label, template's [CLS] replaced exactly once,
// embedded in the inference space only.
export function exportClasses(
  labels: string[],
  template: string,
  job: ExportJob,
): ExportResult {
  if (labels.length < 2) {
    throw new ExportError(`need at least 2 class labels, got ${labels.length}`);
  }
  if (new Set(labels).size !== labels.length) {
    throw new ExportError("class labels must be unique");
  }
  const markers = template.split("[CLS]").length - 1;
  if (markers !== 1) {
    throw new ExportError(`template must contain exactly one [CLS], found ${markers}: '${template}'`);
  }
  fs.mkdirSync(job.outDir, { recursive: true });

  let truncated = 0;
  const promptRows = labels.map((label) => {
    const { embedding, tokens } = job.infer.encoder.encodeText(
      job.infer.name,
      template.replace("[CLS]", label),
    );
    if (tokens.truncated) truncated += 1;
    return embedding;
  });

  const files: string[] = [];
  const matrixName = `classes.${job.infer.name}.xmeb`;
  writeXmeb(outFile(job, matrixName, files), job.infer.encoder.dim, promptRows);
  const classesPath = outFile(job, "classes.json", files);
  fs.writeFileSync(
    classesPath,
    JSON.stringify({ labels, embeddings: { [job.infer.name]: matrixName } }, null, 2) + "\n",
  );
  const warnings =
    truncated > 0 ? [`${truncated} class prompt(s) exceeded the context length`] : [];
  return { files, warnings, truncated };
}
