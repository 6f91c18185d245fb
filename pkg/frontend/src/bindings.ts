/** Thin tokenizer bindings over the pipeline's CLI and file formats.
 *
 * The handle is immutable and safe to share: every call builds a private
 * workspace, drives the CLI, and reads back binary shards (zero-copy id
 * views where alignment allows). Errors from the pipeline surface as
 * exceptions carrying the CLI's structured message.
 */

import { detokenize } from "./detokenize.js";
import { writeMidi } from "./smf.js";
import { makeWorkspace, tokenizeShard, viewsShard, vocabularyText } from "./runner.js";
import { Note } from "./types.js";
import { Vocabulary } from "./vocab.js";

export class BoundTokenizer {
  readonly vocab: Vocabulary;

  private constructor(vocab: Vocabulary) {
    this.vocab = vocab;
  }

  /** Load the vocabulary from the pipeline itself. */
  static create(): BoundTokenizer {
    return new BoundTokenizer(Vocabulary.parse(vocabularyText()));
  }

  /** Construct from an existing vocabulary dump (`ariapipe vocab --out`). */
  static fromVocabText(text: string): BoundTokenizer {
    return new BoundTokenizer(Vocabulary.parse(text));
  }

  /**
   * Tokenize a MIDI file (bytes) or an array of resolved notes.
   * @returns the id sequence, identical to the pipeline's tokenize stage.
   */
  tokenize(input: Uint8Array | Note[]): Int32Array {
    const bytes = input instanceof Uint8Array ? input : writeMidi(input);
    const ws = makeWorkspace([{ name: "input.mid", bytes }]);
    try {
      const records = tokenizeShard(ws);
      if (records.length !== 1) {
        throw new Error(`expected one token record, got ${records.length}`);
      }
      // Zero-copy view over the shard buffer (heap memory outlives the
      // workspace files); treat as read-only.
      return records[0].ids;
    } finally {
      ws.dispose();
    }
  }

  /** Decode ids back to notes (drum hits take the synthetic velocity). */
  detokenize(ids: ArrayLike<number>): Note[] {
    return detokenize(ids, this.vocab);
  }

  /**
   * Draw the deterministic contrastive view pair for a file.
   * Identical (seed, streamId) reproduce identical arrays across processes.
   */
  drawViews(input: Uint8Array | Note[], seed: number, streamId: number): [Int32Array, Int32Array] {
    const bytes = input instanceof Uint8Array ? input : writeMidi(input);
    const ws = makeWorkspace([{ name: "input.mid", bytes }], seed);
    try {
      const records = viewsShard(ws, streamId);
      const a = records.find((r) => r.kind === "view_a");
      const b = records.find((r) => r.kind === "view_b");
      if (!a || !b) {
        throw new Error("view pair missing; the file may have fewer than 200 notes");
      }
      return [a.ids, b.ids];
    } finally {
      ws.dispose();
    }
  }
}
