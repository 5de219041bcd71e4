import * as fs from "fs";
import * as os from "os";
import * as path from "path";
import { afterEach, beforeEach, describe, expect, it } from "vitest";

import { runCli } from "../src/cli";

let dir: string;

beforeEach(() => {
  dir = fs.mkdtempSync(path.join(os.tmpdir(), "embexp-"));
  fs.writeFileSync(
    path.join(dir, "dialog.csv"),
    "B2,Turn,B4,Unit,ee_label_1,er_label_1\n" +
      "c1,0,0,Hello there,,greeting\n" +
      "c1,0,1,Hi back,acknowledgement,\n",
  );
  fs.writeFileSync(path.join(dir, "info.csv"), "B2,B6\nc1,1.00\n");
});

afterEach(() => {
  fs.rmSync(dir, { recursive: true, force: true });
});

function exportArgs(extra: string[] = []): string[] {
  return [
    "export",
    "--raw",
    dir,
    "--out-corpus",
    path.join(dir, "corpus.jsonl"),
    "--out-emb",
    path.join(dir, "corpus.jsonl.emb"),
    ...extra,
  ];
}

describe("runCli", () => {
  it("exports corpus, embeddings, index, and rejects report", () => {
    expect(runCli(exportArgs())).toBe(0);
    for (const f of ["corpus.jsonl", "corpus.jsonl.emb", "corpus.jsonl.emb.idx",
                     "corpus.jsonl.rejects.json"]) {
      expect(fs.existsSync(path.join(dir, f))).toBe(true);
    }
  });

  it("honors --encoder", () => {
    expect(runCli(exportArgs(["--encoder", "hashed-32"]))).toBe(0);
    const buf = fs.readFileSync(path.join(dir, "corpus.jsonl.emb"));
    expect(buf.readUInt32LE(11)).toBe(32);
  });

  it("unknown encoder exits nonzero", () => {
    expect(runCli(exportArgs(["--encoder", "no-such-model"]))).not.toBe(0);
  });

  it("missing raw path exits nonzero", () => {
    const args = exportArgs();
    args[2] = path.join(dir, "nowhere");
    expect(runCli(args)).not.toBe(0);
  });

  it("usage errors exit 2", () => {
    expect(runCli([])).toBe(2);
    expect(runCli(["export", "--raw"])).toBe(2);
    expect(runCli(exportArgs(["--bogus", "x"]))).toBe(2);
  });
});
