import * as fs from "node:fs";

// Binary embedding matrix: "XMEB" | u32 version (1) | u32 dim | u64 count |
// count*dim little-endian float32 row-major payload.
export const XMEB_MAGIC = "XMEB";
export const XMEB_VERSION = 1;

export function encodeXmeb(dim: number, rows: Float32Array[]): Buffer {
  if (!Number.isInteger(dim) || dim < 1) {
    throw new Error(`matrix dim must be a positive integer, got ${dim}`);
  }
  if (rows.length === 0) {
    throw new Error("refusing to encode an empty matrix");
  }
  for (const [i, row] of rows.entries()) {
    if (row.length !== dim) {
      throw new Error(`row ${i} has ${row.length} values, expected ${dim}`);
    }
  }
  const header = Buffer.alloc(4 + 4 + 4 + 8);
  header.write(XMEB_MAGIC, 0, "ascii");
  header.writeUInt32LE(XMEB_VERSION, 4);
  header.writeUInt32LE(dim, 8);
  header.writeBigUInt64LE(BigInt(rows.length), 12);
  const payload = Buffer.alloc(rows.length * dim * 4);
  rows.forEach((row, i) => {
    for (let j = 0; j < dim; j++) {
      payload.writeFloatLE(row[j], (i * dim + j) * 4);
    }
  });
  return Buffer.concat([header, payload]);
}

export function writeXmeb(path: string, dim: number, rows: Float32Array[]): void {
  fs.writeFileSync(path, encodeXmeb(dim, rows));
}
