/** Atomic file writes and the binary embedding container. */
import * as crypto from "crypto";
import * as fs from "fs";
import * as path from "path";

export const EMB_MAGIC = Buffer.from("CFDLG1\0", "latin1");

/** Write via a temp file in the same directory, then rename into place. */
export function writeFileAtomic(target: string, data: string | Buffer): void {
  const dir = path.dirname(target);
  const tmp = path.join(
    dir,
    `.${path.basename(target)}.${process.pid}.${crypto.randomBytes(4).toString("hex")}.tmp`,
  );
  fs.writeFileSync(tmp, data);
  fs.renameSync(tmp, target);
}

/**
 * Embedding container: magic "CFDLG1\0", u32 row count, u32 dimension,
 * then count*dim little-endian float32 values. A companion JSONL index at
 * `<path>.idx` records {"dialogue_id", "turn"} per row, in row order.
 */
export function writeEmbeddings(
  target: string,
  rows: Float32Array[],
  dim: number,
  index: Array<{ dialogueId: string; turn: number }>,
): void {
  if (rows.length !== index.length) {
    throw new Error(`row count ${rows.length} != index count ${index.length}`);
  }
  const body = Buffer.alloc(EMB_MAGIC.length + 8 + 4 * rows.length * dim);
  EMB_MAGIC.copy(body, 0);
  body.writeUInt32LE(rows.length, EMB_MAGIC.length);
  body.writeUInt32LE(dim, EMB_MAGIC.length + 4);
  let off = EMB_MAGIC.length + 8;
  for (const row of rows) {
    if (row.length !== dim) {
      throw new Error(`embedding row length ${row.length} != dimension ${dim}`);
    }
    for (const v of row) {
      body.writeFloatLE(v, off);
      off += 4;
    }
  }
  writeFileAtomic(target, body);
  const idx = index
    .map((r) => JSON.stringify({ dialogue_id: r.dialogueId, turn: r.turn }) + "\n")
    .join("");
  writeFileAtomic(target + ".idx", idx);
}

export function readEmbeddingHeader(file: string): { count: number; dim: number } {
  const buf = fs.readFileSync(file);
  if (buf.length < EMB_MAGIC.length + 8 || !buf.subarray(0, EMB_MAGIC.length).equals(EMB_MAGIC)) {
    throw new Error(`${file}: not an embedding file`);
  }
  return {
    count: buf.readUInt32LE(EMB_MAGIC.length),
    dim: buf.readUInt32LE(EMB_MAGIC.length + 4),
  };
}
