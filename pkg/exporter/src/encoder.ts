/**
 * Sentence encoders. The default, "hashed-768", is a deterministic hashed
 * bag-of-tokens encoder: every token and adjacent-token bigram is FNV-1a
 * hashed into one of `dim` signed buckets and the result is L2-normalized.
 * It needs no model download and always produces the same vector for the
 * same text, which keeps export runs byte-reproducible.
 *
 * Any "hashed-<dim>" name selects the same family at another dimension.
 * Unknown names raise EncoderError; the CLI turns that into a nonzero exit.
 */

export const DEFAULT_ENCODER = "hashed-768";

export class EncoderError extends Error {}

export interface Encoder {
  name: string;
  dim: number;
  encode(texts: string[]): Float32Array[];
}

const FNV_OFFSET = 0x811c9dc5;
const FNV_PRIME = 0x01000193;

function fnv1a(s: string): number {
  let h = FNV_OFFSET;
  for (let i = 0; i < s.length; i++) {
    h ^= s.charCodeAt(i);
    h = Math.imul(h, FNV_PRIME) >>> 0;
  }
  return h >>> 0;
}

function tokenize(text: string): string[] {
  return text.toLowerCase().split(/[^a-z0-9']+/).filter((t) => t.length > 0);
}

function hashedVector(text: string, dim: number): Float32Array {
  const v = new Float32Array(dim);
  const tokens = tokenize(text);
  const features = tokens.slice();
  for (let i = 0; i + 1 < tokens.length; i++) {
    features.push(`${tokens[i]}${tokens[i + 1]}`);
  }
  for (const feat of features) {
    const h = fnv1a(feat);
    const sign = h & 0x80000000 ? -1 : 1;
    v[h % dim] += sign;
  }
  let norm = 0;
  for (const x of v) norm += x * x;
  if (norm > 0) {
    norm = Math.sqrt(norm);
    for (let i = 0; i < dim; i++) v[i] /= norm;
  }
  return v;
}

export function loadEncoder(name: string): Encoder {
  const m = /^hashed-(\d+)$/.exec(name);
  if (m === null) {
    throw new EncoderError(
      `cannot load encoder "${name}" (available: hashed-<dim>, default ${DEFAULT_ENCODER})`,
    );
  }
  const dim = Number(m[1]);
  if (dim < 1 || dim > 65536) {
    throw new EncoderError(`encoder dimension ${dim} out of range [1, 65536]`);
  }
  return {
    name,
    dim,
    encode: (texts) => texts.map((t) => hashedVector(t, dim)),
  };
}
