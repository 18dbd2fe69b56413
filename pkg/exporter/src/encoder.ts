import { createHash } from "node:crypto";

import { tokenize, Tokenized } from "./tokenizer.js";

// Deterministic stand-in for a real vision-language encoder: features are
// drawn from SHA-256 in counter mode over the input payload, keyed by the
// space name and model id so each space sees a different projection of the
// same input. Same input and model always yields the same bytes on disk.
// Output is raw (unnormalized); the engine's loader normalizes where the
// space demands it.
export interface Encoder {
  readonly model: string;
  readonly dim: number;
  encodeBytes(spaceName: string, payload: Buffer): Float32Array;
  encodeText(spaceName: string, text: string): { embedding: Float32Array; tokens: Tokenized };
}

function expand(seed: Buffer, dim: number): Float32Array {
  const out = new Float32Array(dim);
  const counter = Buffer.alloc(4);
  for (let block = 0; block * 8 < dim; block++) {
    counter.writeUInt32LE(block, 0);
    const digest = createHash("sha256").update(seed).update(counter).digest();
    for (let j = 0; j < 8 && block * 8 + j < dim; j++) {
      const word = digest.readUInt32LE(j * 4);
      out[block * 8 + j] = (word / 2 ** 32) * 2 - 1; // [-1, 1)
    }
  }
  // hash output never lands near the origin, but the loader rejects zero
  // rows, so keep that unreachable by construction
  if (out.every((x) => Math.abs(x) < 1e-6)) {
    out[0] = 1.0;
  }
  return out;
}

export class HashEncoder implements Encoder {
  constructor(
    public readonly model: string,
    public readonly dim: number,
  ) {
    if (!Number.isInteger(dim) || dim < 1) {
      throw new Error(`encoder dim must be a positive integer, got ${dim}`);
    }
  }

  private seed(spaceName: string, payload: Buffer): Buffer {
    return createHash("sha256")
      .update(spaceName, "utf8")
      .update(Buffer.from([0]))
      .update(this.model, "utf8")
      .update(Buffer.from([0]))
      .update(payload)
      .digest();
  }

  encodeBytes(spaceName: string, payload: Buffer): Float32Array {
    return expand(this.seed(spaceName, payload), this.dim);
  }

  // text goes through the tokenizer first so truncation changes the embedding
  encodeText(spaceName: string, text: string): { embedding: Float32Array; tokens: Tokenized } {
    const tokens = tokenize(text);
    const payload = Buffer.alloc(tokens.ids.length * 4); // explicit LE, not platform order
    tokens.ids.forEach((id, i) => payload.writeUInt32LE(id, i * 4));
    return { embedding: expand(this.seed(spaceName, payload), this.dim), tokens };
  }
}
