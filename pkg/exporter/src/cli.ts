#!/usr/bin/env node
/**
 * embed-export export --raw <path> --out-corpus <jsonl> --out-emb <bin>
 *                     [--encoder <name>]
 *
 * Converts a raw dialogue corpus to the pipeline's JSONL corpus format and
 * encodes every utterance into the binary embedding container. The default
 * encoder is hashed-768 (deterministic, 768 dimensions).
 */
import { convertCorpus } from "./convert";
import { DEFAULT_ENCODER, EncoderError } from "./encoder";
import { exportEmbeddings } from "./embed";

const USAGE =
  "usage: embed-export export --raw <path> --out-corpus <jsonl> " +
  `--out-emb <bin> [--encoder <name>]  (default encoder: ${DEFAULT_ENCODER})`;

function parseArgs(argv: string[]): Map<string, string> {
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith("--") || i + 1 >= argv.length) {
      throw new Error(`bad argument "${key}"`);
    }
    flags.set(key.slice(2), argv[i + 1]);
  }
  return flags;
}

export function runCli(argv: string[]): number {
  if (argv[0] !== "export") {
    process.stderr.write(USAGE + "\n");
    return 2;
  }
  let flags: Map<string, string>;
  try {
    flags = parseArgs(argv.slice(1));
  } catch (e) {
    process.stderr.write(`${(e as Error).message}\n${USAGE}\n`);
    return 2;
  }
  for (const key of flags.keys()) {
    if (!["raw", "out-corpus", "out-emb", "encoder"].includes(key)) {
      process.stderr.write(`unknown flag --${key}\n${USAGE}\n`);
      return 2;
    }
  }
  const raw = flags.get("raw");
  const outCorpus = flags.get("out-corpus");
  const outEmb = flags.get("out-emb");
  if (raw === undefined || outCorpus === undefined || outEmb === undefined) {
    process.stderr.write(USAGE + "\n");
    return 2;
  }
  const encoderName = flags.get("encoder") ?? DEFAULT_ENCODER;
  try {
    const { dialogues, rejects } = convertCorpus(raw, outCorpus);
    const summary = exportEmbeddings(outCorpus, encoderName, outEmb);
    process.stderr.write(
      `wrote ${dialogues.length} dialogues (${rejects.rowsRejected} rows, ` +
        `${rejects.dialoguesRejected} dialogues rejected), ` +
        `${summary.rows} x ${summary.dim} embeddings via ${summary.encoder}\n`,
    );
    return 0;
  } catch (e) {
    process.stderr.write(`embed-export: ${(e as Error).message}\n`);
    return e instanceof EncoderError ? 2 : 1;
  }
}

if (require.main === module) {
  process.exit(runCli(process.argv.slice(2)));
}
