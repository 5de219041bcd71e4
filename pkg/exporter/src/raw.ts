/**
 * Raw input model: two CSV tables in the layout the persuasion-dialogue
 * dataset is published in.
 *
 *   dialog table (dialog.csv): one row per utterance, in dialogue order.
 *     B2    conversation id
 *     B4    speaker: 0 = persuader (ER), 1 = persuadee (EE)
 *     Unit  utterance text
 *     er_label_1 / ee_label_1  optional strategy annotation for the speaker
 *
 *   info table (info.csv): one row per conversation.
 *     B2    conversation id
 *     B6    intended donation amount (non-negative decimal, dollars)
 *
 * `--raw` may point at the directory holding both files or at the dialog
 * CSV itself (the info table is then expected as info.csv next to it).
 */
import * as fs from "fs";
import * as path from "path";
import Papa from "papaparse";

export const EE = "EE";
export const ER = "ER";

export interface RawTurn {
  role: typeof EE | typeof ER;
  text: string;
  strategy: string | null;
}

export interface RawDialogueRecord {
  conversationId: string;
  turns: RawTurn[];
  donationCents: number;
}

export interface RejectCounts {
  rowsTotal: number;
  rowsRejected: number;
  dialoguesTotal: number;
  dialoguesRejected: number;
  reasons: Record<string, number>;
}

export class RawFormatError extends Error {}

export function emptyRejects(): RejectCounts {
  return {
    rowsTotal: 0,
    rowsRejected: 0,
    dialoguesTotal: 0,
    dialoguesRejected: 0,
    reasons: {},
  };
}

function count(rej: RejectCounts, reason: string): void {
  rej.reasons[reason] = (rej.reasons[reason] ?? 0) + 1;
}

export function resolveRawPaths(rawPath: string): { dialog: string; info: string } {
  const st = fs.statSync(rawPath);
  if (st.isDirectory()) {
    return {
      dialog: path.join(rawPath, "dialog.csv"),
      info: path.join(rawPath, "info.csv"),
    };
  }
  return { dialog: rawPath, info: path.join(path.dirname(rawPath), "info.csv") };
}

type Row = Record<string, string>;

function parseCsv(file: string): Row[] {
  const text = fs.readFileSync(file, "utf8");
  const out = Papa.parse<Row>(text, { header: true, skipEmptyLines: true });
  for (const err of out.errors) {
    if (err.code !== "TooFewFields" && err.code !== "TooManyFields") {
      throw new RawFormatError(`${file}: ${err.message} (row ${err.row})`);
    }
  }
  return out.data;
}

function parseDonationCents(raw: string | undefined): number | null {
  if (raw === undefined) return null;
  const trimmed = raw.trim();
  if (!/^\$?\d+(\.\d+)?$/.test(trimmed)) return null;
  const dollars = Number(trimmed.replace("$", ""));
  if (!Number.isFinite(dollars) || dollars < 0) return null;
  return Math.round(dollars * 100);
}

/**
 * Read both tables into per-conversation records, skipping rows and
 * dialogues that cannot be interpreted. Every skip is tallied in the
 * returned reject counts; nothing is silently dropped.
 */
export function readRawCorpus(rawPath: string): {
  records: RawDialogueRecord[];
  rejects: RejectCounts;
} {
  const { dialog, info } = resolveRawPaths(rawPath);
  const rejects = emptyRejects();

  const donations = new Map<string, number>();
  for (const row of parseCsv(info)) {
    const id = (row["B2"] ?? "").trim();
    if (!id) continue;
    const cents = parseDonationCents(row["B6"]);
    if (cents === null) {
      count(rejects, "info: donation not a non-negative decimal");
      continue;
    }
    donations.set(id, cents);
  }

  const turnsById = new Map<string, RawTurn[]>();
  const order: string[] = [];
  for (const row of parseCsv(dialog)) {
    rejects.rowsTotal += 1;
    const id = (row["B2"] ?? "").trim();
    if (!id) {
      rejects.rowsRejected += 1;
      count(rejects, "dialog: missing conversation id");
      continue;
    }
    const speaker = (row["B4"] ?? "").trim();
    if (speaker !== "0" && speaker !== "1") {
      rejects.rowsRejected += 1;
      count(rejects, "dialog: speaker not 0/1");
      continue;
    }
    const text = (row["Unit"] ?? "").trim();
    if (!text) {
      rejects.rowsRejected += 1;
      count(rejects, "dialog: empty utterance text");
      continue;
    }
    const role = speaker === "1" ? EE : ER;
    const labelCol = role === EE ? "ee_label_1" : "er_label_1";
    const strategy = (row[labelCol] ?? "").trim() || null;
    if (!turnsById.has(id)) {
      turnsById.set(id, []);
      order.push(id);
    }
    turnsById.get(id)!.push({ role, text, strategy });
  }

  const records: RawDialogueRecord[] = [];
  for (const id of order) {
    rejects.dialoguesTotal += 1;
    const donationCents = donations.get(id);
    if (donationCents === undefined) {
      rejects.dialoguesRejected += 1;
      count(rejects, "dialogue: no donation record");
      continue;
    }
    records.push({ conversationId: id, turns: turnsById.get(id)!, donationCents });
  }
  return { records, rejects };
}
