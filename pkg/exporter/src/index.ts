export { RawDialogueRecord, RawTurn, RejectCounts, readRawCorpus } from "./raw";
export {
  CorpusDialogue,
  CorpusUtterance,
  MAX_UTTERANCES,
  convertCorpus,
  readCorpusJsonl,
  toCorpusDialogue,
} from "./convert";
export { DEFAULT_ENCODER, Encoder, EncoderError, loadEncoder } from "./encoder";
export { EmbedSummary, embedDialogues, exportEmbeddings } from "./embed";
export { EMB_MAGIC, readEmbeddingHeader, writeEmbeddings, writeFileAtomic } from "./io";
export { runCli } from "./cli";
