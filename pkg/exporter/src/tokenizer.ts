// Caption preprocessing mirroring the usual vision-language text pipeline:
// lowercase, split into word/punctuation tokens, map to 32-bit ids, and cut
// to the encoder's context length. Truncation is surfaced, never silent.
export const CONTEXT_LENGTH = 77;

const TOKEN_PATTERN = /[a-z0-9]+|[^\sa-z0-9]/g;

// FNV-1a, 32 bit, over the token's UTF-8 bytes.
export function tokenId(token: string): number {
  let hash = 0x811c9dc5;
  for (const byte of Buffer.from(token, "utf8")) {
    hash ^= byte;
    hash = Math.imul(hash, 0x01000193) >>> 0;
  }
  return hash >>> 0;
}

export interface Tokenized {
  ids: Uint32Array;
  tokenCount: number; // before truncation
  truncated: boolean;
}

export function tokenize(text: string, contextLength: number = CONTEXT_LENGTH): Tokenized {
  const tokens = text.toLowerCase().match(TOKEN_PATTERN) ?? [];
  const kept = tokens.slice(0, contextLength);
  return {
    ids: Uint32Array.from(kept, tokenId),
    tokenCount: tokens.length,
    truncated: tokens.length > contextLength,
  };
}
