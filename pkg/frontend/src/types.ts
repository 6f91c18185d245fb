/** Shared note and token types mirroring the pipeline's wire formats. */

export interface Note {
  /** One of the 13 class names ("piano", ..., "drum"). */
  instrumentClass: string;
  pitch: number;
  velocity: number;
  onsetMs: number;
  /** Equals onsetMs for percussion. */
  offsetMs: number;
}

export type Token = string;

/** Class names in their canonical order; "drum" is percussion (channel 10). */
export const INSTRUMENT_CLASSES = [
  "piano",
  "chromatic",
  "organ",
  "guitar",
  "bass",
  "strings",
  "voice",
  "brass",
  "reed",
  "pipe",
  "synth",
  "other",
  "drum",
] as const;

/** Representative program emitted when rendering a class back to MIDI. */
export const CLASS_PROGRAMS: Record<string, number> = {
  piano: 0,
  chromatic: 8,
  organ: 16,
  guitar: 24,
  bass: 32,
  strings: 40,
  voice: 52,
  brass: 56,
  reed: 64,
  pipe: 72,
  synth: 80,
  other: 96,
};
