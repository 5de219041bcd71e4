/**
 * Raw tables -> corpus JSONL.
 *
 * Output schema, one dialogue per line:
 *   {"id", "donation_cents", "utterances": [{"turn", "role", "text", "strategy"}]}
 *
 * Consecutive same-speaker rows are merged into one utterance (text joined
 * with a space, first strategy annotation kept) so roles strictly
 * alternate. Dialogues that still violate the corpus invariants are
 * skipped and tallied in the rejects report at `<out>.rejects.json`.
 */
import * as fs from "fs";

import { RawDialogueRecord, RawTurn, RejectCounts, readRawCorpus } from "./raw";
import { writeFileAtomic } from "./io";

export const MAX_UTTERANCES = 25;

export interface CorpusUtterance {
  turn: number;
  role: string;
  text: string;
  strategy: string | null;
}

export interface CorpusDialogue {
  id: string;
  donation_cents: number;
  utterances: CorpusUtterance[];
}

function mergeAlternating(turns: RawTurn[]): CorpusUtterance[] {
  const out: CorpusUtterance[] = [];
  for (const t of turns) {
    const last = out[out.length - 1];
    if (last !== undefined && last.role === t.role) {
      last.text = `${last.text} ${t.text}`;
      if (last.strategy === null) last.strategy = t.strategy;
    } else {
      out.push({ turn: out.length, role: t.role, text: t.text, strategy: t.strategy });
    }
  }
  return out;
}

export function toCorpusDialogue(
  rec: RawDialogueRecord,
): { dialogue: CorpusDialogue | null; reason: string | null } {
  const utterances = mergeAlternating(rec.turns);
  if (utterances.length === 0) {
    return { dialogue: null, reason: "dialogue: no usable utterances" };
  }
  if (utterances.length > MAX_UTTERANCES) {
    return { dialogue: null, reason: `dialogue: more than ${MAX_UTTERANCES} utterances` };
  }
  return {
    dialogue: { id: rec.conversationId, donation_cents: rec.donationCents, utterances },
    reason: null,
  };
}

/**
 * Convert the raw corpus at `rawPath` into corpus JSONL at `outJsonl`.
 * Returns the dialogues written plus the full reject tally; the tally is
 * also written to `<outJsonl>.rejects.json`.
 */
export function convertCorpus(
  rawPath: string,
  outJsonl: string,
): { dialogues: CorpusDialogue[]; rejects: RejectCounts } {
  const { records, rejects } = readRawCorpus(rawPath);
  const dialogues: CorpusDialogue[] = [];
  for (const rec of records) {
    const { dialogue, reason } = toCorpusDialogue(rec);
    if (dialogue === null) {
      rejects.dialoguesRejected += 1;
      rejects.reasons[reason!] = (rejects.reasons[reason!] ?? 0) + 1;
      continue;
    }
    dialogues.push(dialogue);
  }
  dialogues.sort((a, b) => (a.id < b.id ? -1 : a.id > b.id ? 1 : 0));
  writeFileAtomic(outJsonl, dialogues.map((d) => JSON.stringify(d) + "\n").join(""));
  writeFileAtomic(
    outJsonl + ".rejects.json",
    JSON.stringify(
      {
        rows_total: rejects.rowsTotal,
        rows_rejected: rejects.rowsRejected,
        dialogues_total: rejects.dialoguesTotal,
        dialogues_rejected: rejects.dialoguesRejected,
        reasons: rejects.reasons,
      },
      null,
      2,
    ) + "\n",
  );
  return { dialogues, rejects };
}

/** Re-read a corpus JSONL file (used by the embedding step and tests). */
export function readCorpusJsonl(file: string): CorpusDialogue[] {
  const out: CorpusDialogue[] = [];
  for (const line of fs.readFileSync(file, "utf8").split("\n")) {
    if (line.trim() === "") continue;
    out.push(JSON.parse(line) as CorpusDialogue);
  }
  return out;
}
