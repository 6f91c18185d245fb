export { BoundTokenizer } from "./bindings.js";
export { detokenize } from "./detokenize.js";
export { writeMidi } from "./smf.js";
export { readBinaryShard, readTextShard } from "./shards.js";
export type { ShardRecord } from "./shards.js";
export { Vocabulary } from "./vocab.js";
export type { VocabConfig } from "./vocab.js";
export { INSTRUMENT_CLASSES, CLASS_PROGRAMS } from "./types.js";
export type { Note, Token } from "./types.js";
