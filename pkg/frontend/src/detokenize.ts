/** Exact inverse of the token schema, given a parsed vocabulary. */

import { Note, INSTRUMENT_CLASSES } from "./types.js";
import { Vocabulary } from "./vocab.js";

const PITCHED = new Set<string>(INSTRUMENT_CLASSES.slice(0, 12));

export function detokenize(ids: ArrayLike<number>, vocab: Vocabulary): Note[] {
  const cfg = vocab.config;
  const notes: Note[] = [];
  let segment = 0;
  let i = 0;
  const tokens: string[] = [];
  for (let k = 0; k < ids.length; k++) tokens.push(vocab.tokenOf(ids[k]));
  if (tokens[0] === "<BOS>") i = 1;

  const payload = (token: string, kind: string, at: number): number => {
    const parts = token.split(":");
    if (parts.length !== 2 || parts[0] !== kind) {
      throw new Error(`at index ${at}: expected ${kind}, found ${token}`);
    }
    return Number(parts[1]);
  };

  while (i < tokens.length) {
    const tok = tokens[i];
    if (tok === "<T>") {
      segment += 1;
      i += 1;
      continue;
    }
    if (tok === "<D>") {
      i += 1;
      continue;
    }
    if (tok === "<EOS>" || tok === "<PAD>") break;
    const parts = tok.split(":");
    if (parts[0] === "drum" && parts.length === 2) {
      const onset = segment * cfg.segmentMs + payload(tokens[i + 1], "onset", i + 1);
      notes.push({
        instrumentClass: "drum",
        pitch: Number(parts[1]),
        velocity: cfg.drumVelocity,
        onsetMs: onset,
        offsetMs: onset,
      });
      i += 2;
    } else if (parts.length === 3 && PITCHED.has(parts[0])) {
      const onset = segment * cfg.segmentMs + payload(tokens[i + 1], "onset", i + 1);
      const dur = payload(tokens[i + 2], "dur", i + 2);
      notes.push({
        instrumentClass: parts[0],
        pitch: Number(parts[1]),
        velocity: Number(parts[2]),
        onsetMs: onset,
        offsetMs: onset + dur,
      });
      i += 3;
    } else {
      throw new Error(`at index ${i}: unexpected token ${tok}`);
    }
  }
  return notes;
}
