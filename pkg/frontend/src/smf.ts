/** Minimal SMF-1 writer at 1 tick == 1 ms (division 500, tempo 500000).
 *
 * Mirrors the pipeline's own rendering convention so note arrays built
 * here parse back to the same resolved notes: one channel per instrument
 * class (percussion on channel 10), representative program changes at
 * tick 0, note_offs sorted before note_ons at the same tick.
 */

import { CLASS_PROGRAMS, INSTRUMENT_CLASSES, Note } from "./types.js";

const DRUM_CHANNEL = 9;
const DIVISION = 500;
const TEMPO_US = 500000;

function vlq(value: number): number[] {
  const out = [value & 0x7f];
  value >>>= 7;
  while (value > 0) {
    out.push((value & 0x7f) | 0x80);
    value >>>= 7;
  }
  return out.reverse();
}

function u32be(value: number): number[] {
  return [(value >>> 24) & 0xff, (value >>> 16) & 0xff, (value >>> 8) & 0xff, value & 0xff];
}

function trackChunk(events: Array<[number, number[]]>): number[] {
  const body: number[] = [];
  let prev = 0;
  for (const [tick, payload] of events) {
    body.push(...vlq(tick - prev), ...payload);
    prev = tick;
  }
  body.push(...vlq(0), 0xff, 0x2f, 0x00);
  return [0x4d, 0x54, 0x72, 0x6b, ...u32be(body.length), ...body];
}

export function writeMidi(notes: Note[]): Uint8Array {
  const order = new Map(INSTRUMENT_CLASSES.map((c, i) => [c, i]));
  const classes = [...new Set(notes.filter((n) => n.instrumentClass !== "drum").map((n) => n.instrumentClass))];
  classes.sort((a, b) => (order.get(a as never) ?? 99) - (order.get(b as never) ?? 99));

  const channels = new Map<string, number>();
  let next = 0;
  for (const cls of classes) {
    if (next === DRUM_CHANNEL) next += 1;
    if (next > 15) throw new Error("too many instrument classes for one MIDI file");
    channels.set(cls, next);
    next += 1;
  }

  const events: Array<[number, number, number[]]> = [];
  for (const [cls, channel] of channels) {
    events.push([0, 0, [0xc0 | channel, CLASS_PROGRAMS[cls]]]);
  }
  for (const note of notes) {
    const isDrum = note.instrumentClass === "drum";
    const channel = isDrum ? DRUM_CHANNEL : channels.get(note.instrumentClass)!;
    const offTick = isDrum ? note.onsetMs + 1 : note.offsetMs;
    events.push([note.onsetMs, 2, [0x90 | channel, note.pitch, note.velocity]]);
    events.push([offTick, 1, [0x80 | channel, note.pitch, 0x40]]);
  }
  events.sort((a, b) => a[0] - b[0] || a[1] - b[1]);

  const header = [
    0x4d, 0x54, 0x68, 0x64,
    ...u32be(6),
    0x00, 0x01,
    0x00, 0x02,
    (DIVISION >>> 8) & 0xff, DIVISION & 0xff,
  ];
  const tempoTrack = trackChunk([[0, [0xff, 0x51, 0x03, (TEMPO_US >>> 16) & 0xff, (TEMPO_US >>> 8) & 0xff, TEMPO_US & 0xff]]]);
  const noteTrack = trackChunk(events.map(([tick, , payload]) => [tick, payload]));
  return Uint8Array.from([...header, ...tempoTrack, ...noteTrack]);
}
