/** Corpus JSONL -> binary embedding file, row order following the JSONL. */
import { CorpusDialogue, readCorpusJsonl } from "./convert";
import { Encoder, loadEncoder } from "./encoder";
import { writeEmbeddings } from "./io";

export interface EmbedSummary {
  rows: number;
  dim: number;
  encoder: string;
}

export function embedDialogues(
  dialogues: CorpusDialogue[],
  encoder: Encoder,
  outBin: string,
): EmbedSummary {
  const texts: string[] = [];
  const index: Array<{ dialogueId: string; turn: number }> = [];
  for (const d of dialogues) {
    for (const u of d.utterances) {
      texts.push(u.text);
      index.push({ dialogueId: d.id, turn: u.turn });
    }
  }
  const rows = encoder.encode(texts);
  writeEmbeddings(outBin, rows, encoder.dim, index);
  return { rows: rows.length, dim: encoder.dim, encoder: encoder.name };
}

/** Encode every utterance of `jsonlPath` with the named encoder. */
export function exportEmbeddings(
  jsonlPath: string,
  encoderName: string,
  outBin: string,
): EmbedSummary {
  return embedDialogues(readCorpusJsonl(jsonlPath), loadEncoder(encoderName), outBin);
}
