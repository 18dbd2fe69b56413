import * as fs from "node:fs";
import * as path from "node:path";

import Papa from "papaparse";
import { z } from "zod";

// One manifest row per record: an image path, optionally a caption (required
// for corpus exports), an optional string label, and an optional explicit id.
const rowSchema = z.object({
  id: z.coerce.number().int().nonnegative().optional(),
  image: z.string().min(1),
  caption: z.string().optional(),
  label: z.string().min(1).optional(),
});

export type ManifestRow = z.infer<typeof rowSchema>;

export class ManifestError extends Error {}

function parseJsonl(text: string, origin: string): unknown[] {
  const objects: unknown[] = [];
  text.split("\n").forEach((line, i) => {
    if (!line.trim()) return;
    try {
      objects.push(JSON.parse(line));
    } catch (exc) {
      throw new ManifestError(`${origin}:${i + 1}: invalid JSON: ${exc}`);
    }
  });
  return objects;
}

function parseCsv(text: string, origin: string): unknown[] {
  const parsed = Papa.parse<Record<string, string>>(text, {
    header: true,
    skipEmptyLines: true,
  });
  if (parsed.errors.length > 0) {
    const first = parsed.errors[0];
    throw new ManifestError(`${origin}: CSV parse error at row ${first.row}: ${first.message}`);
  }
  // drop empty cells so optional columns stay absent rather than ""
  return parsed.data.map((row) =>
    Object.fromEntries(Object.entries(row).filter(([, v]) => v !== "")),
  );
}

export function readManifest(manifestPath: string): ManifestRow[] {
  let text: string;
  try {
    text = fs.readFileSync(manifestPath, "utf8");
  } catch (exc) {
    throw new ManifestError(`cannot read manifest ${manifestPath}: ${exc}`);
  }
  const objects =
    path.extname(manifestPath).toLowerCase() === ".csv"
      ? parseCsv(text, manifestPath)
      : parseJsonl(text, manifestPath);
  if (objects.length === 0) {
    throw new ManifestError(`${manifestPath}: manifest has no records`);
  }
  const rows = objects.map((obj, i) => {
    const check = rowSchema.safeParse(obj);
    if (!check.success) {
      throw new ManifestError(`${manifestPath}: record ${i + 1}: ${check.error.issues[0].message}`);
    }
    return check.data;
  });
  // explicit ids must be unique; records without one get their row number
  const ids = new Set<number>();
  rows.forEach((row, i) => {
    const id = row.id ?? i;
    if (ids.has(id)) {
      throw new ManifestError(`${manifestPath}: duplicate record id ${id}`);
    }
    ids.add(id);
    row.id = id;
  });
  return rows;
}
