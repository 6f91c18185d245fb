"""Shared generators and oracles for the test suite."""

from __future__ import annotations

from fractions import Fraction
from pathlib import Path

import numpy as np

from ariapipe.curate import FileMetadata, write_catalog
from ariapipe.midi import write_midi
from ariapipe.notes import DRUM_CLASS, PITCHED_CLASSES, Note, NoteList
from ariapipe.tokenizer import (
    BOS_TOK,
    SEG_TOK,
    DEFAULT_CONFIG,
    VELOCITY_REPRESENTATIVES,
    Token,
)


def random_quantized_notelist(
    rng: np.random.Generator,
    n_notes: int,
    include_drums: bool = False,
    max_onset_ms: int = 60_000,
    source_id: str = "",
) -> NoteList:
    """Notes already on the 10 ms grid with bin-representative velocities.

    Drum velocities use the tokenizer's synthetic drum velocity so the
    tokenize/detokenize round trip is exact.
    """
    notes = []
    for _ in range(n_notes):
        onset = int(rng.integers(0, max_onset_ms // 10 + 1)) * 10
        if include_drums and rng.random() < 0.15:
            notes.append(
                Note(DRUM_CLASS, int(rng.integers(0, 128)), DEFAULT_CONFIG.drum_velocity, onset, onset)
            )
            continue
        cls = PITCHED_CLASSES[int(rng.integers(0, len(PITCHED_CLASSES)))]
        dur = int(rng.integers(1, 3001)) * 10
        vel = VELOCITY_REPRESENTATIVES[int(rng.integers(0, 12))]
        notes.append(Note(cls, int(rng.integers(0, 128)), vel, onset, onset + dur))
    return NoteList.from_notes(notes, source_id=source_id)


def random_unquantized_notelist(
    rng: np.random.Generator, n_notes: int, max_onset_ms: int = 60_000
) -> NoteList:
    """Arbitrary integer-millisecond notes, durations within the token range."""
    notes = []
    for _ in range(n_notes):
        onset = int(rng.integers(0, max_onset_ms + 1))
        dur = int(rng.integers(10, 30_001))
        cls = PITCHED_CLASSES[int(rng.integers(0, len(PITCHED_CLASSES)))]
        notes.append(
            Note(cls, int(rng.integers(0, 128)), int(rng.integers(1, 128)), onset, onset + dur)
        )
    return NoteList.from_notes(notes)


def random_writable_notelist(
    rng: np.random.Generator,
    n_notes: int,
    include_drums: bool = True,
    source_id: str = "",
) -> NoteList:
    """Round-trippable through write/parse/resolve without warnings.

    Same-pitch overlaps are avoided (FIFO matching would otherwise permute
    crossing intervals) and every duration clears the short-note floor.
    """
    lane_clock: dict[tuple[str, int], int] = {}
    notes = []
    for _ in range(n_notes):
        if include_drums and rng.random() < 0.2:
            onset = int(rng.integers(0, 120_000))
            notes.append(
                Note(DRUM_CLASS, int(rng.integers(0, 128)), int(rng.integers(1, 128)), onset, onset)
            )
            continue
        cls = PITCHED_CLASSES[int(rng.integers(0, len(PITCHED_CLASSES)))]
        pitch = int(rng.integers(0, 128))
        start_floor = lane_clock.get((cls, pitch), 0)
        onset = start_floor + int(rng.integers(0, 2000))
        dur = int(rng.integers(10, 5000))
        lane_clock[(cls, pitch)] = onset + dur
        notes.append(Note(cls, pitch, int(rng.integers(1, 128)), onset, onset + dur))
    return NoteList.from_notes(notes, source_id=source_id)


def schema_tokens(notes: NoteList) -> list[Token]:
    """Independent reconstruction of the token stream from sorted notes.

    Written as direct modulo arithmetic per note rather than the
    incremental segment walk the production encoder uses.
    """
    tokens: list[Token] = [BOS_TOK]
    prev_segment = 0
    for n in notes:
        q_onset = ((n.onset_ms + 5) // 10) * 10
        segment = q_onset // 5000
        tokens.extend([SEG_TOK] * (segment - prev_segment))
        prev_segment = segment
        if n.is_drum:
            tokens.append(("drum", n.pitch))
            tokens.append(("onset", q_onset % 5000))
        else:
            dur = min(max(((n.duration_ms + 5) // 10) * 10, 10), 30_000)
            bin_ = min(n.velocity // 11, 11)
            tokens.append((n.instrument_class, n.pitch, min(max(bin_ * 11 + 5, 1), 127)))
            tokens.append(("onset", q_onset % 5000))
            tokens.append(("dur", dur))
    return tokens


def per_tick_ms_oracle(tick: int, tempo_map: list[tuple[int, int]], division: int) -> int:
    """Brute-force per-tick integration of the tempo map, exact rationals."""

    def tempo_at(t: int) -> int:
        current = 500_000
        for entry_tick, us in tempo_map:
            if entry_tick <= t:
                current = us
            else:
                break
        return current

    total = Fraction(0)
    for t in range(tick):
        total += Fraction(tempo_at(t), division * 1000)
    floor = total.numerator // total.denominator
    frac = total - floor
    return floor + (1 if frac >= Fraction(1, 2) else 0)


def gap_oracle(intervals: list[tuple[int, int]]) -> int:
    """Coordinate-cover silence scan, independent of the merge sweep.

    For each pair of adjacent event coordinates, test whether any interval
    covers it; the longest maximal run of uncovered cells between covered
    ones is the answer.
    """
    coords = sorted({x for iv in intervals for x in iv})
    gap = 0
    run_start = None
    for a, b in zip(coords, coords[1:]):
        covered = any(on <= a and off >= b for on, off in intervals)
        if covered:
            if run_start is not None:
                gap = max(gap, a - run_start)
                run_start = None
        elif run_start is None:
            run_start = a
    return gap


TRIAD_NOTES = NoteList.from_notes(
    [
        Note("piano", 60, 60, 1000, 4000),
        Note("piano", 64, 60, 3000, 6000),
        Note("piano", 67, 60, 5000, 8000),
    ]
)

TRIAD_TOKENS: list[Token] = [
    BOS_TOK,
    ("piano", 60, 60),
    ("onset", 1000),
    ("dur", 3000),
    ("piano", 64, 60),
    ("onset", 3000),
    ("dur", 3000),
    SEG_TOK,
    ("piano", 67, 60),
    ("onset", 0),
    ("dur", 3000),
]


def build_corpus(root: Path, n_files: int = 50, seed: int = 20240601) -> list[str]:
    """Deterministic 50-file MIDI corpus plus a metadata catalog.

    Most files are varied enough to pass the default quality filters; a few
    are deliberately degenerate (tiny or looping) to exercise discards.
    Returns the sorted source ids.
    """
    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    composers = ["bach", "chopin", "liszt", "satie", None]
    catalog = []
    source_ids = []
    for index in range(n_files):
        source_id = f"file{index:03d}.mid"
        if index % 17 == 5:
            # Degenerate: too few notes for several metrics.
            notes = [Note("piano", 60 + k, 60, k * 400, k * 400 + 200) for k in range(3)]
        elif index % 17 == 11:
            # Degenerate: a four-note loop, heavily repetitive.
            loop = [60, 64, 67, 72]
            notes = [
                Note("piano", loop[k % 4], 70, k * 250, k * 250 + 200) for k in range(300)
            ]
        else:
            n_notes = int(rng.integers(220, 420))
            notes = []
            clock = 0
            for _ in range(n_notes):
                clock += int(rng.integers(20, 400))
                pitch = int(rng.integers(40, 100))
                dur = int(rng.integers(80, 2400))
                vel = int(rng.integers(30, 110))
                notes.append(Note("piano", pitch, vel, clock, clock + dur))
        path = root / source_id
        path.write_bytes(write_midi(NoteList.from_notes(notes)))
        source_ids.append(source_id)
        composer = composers[index % len(composers)]
        catalog.append(
            FileMetadata(
                source_id=source_id,
                composer=composer,
                opus=f"op{index % 7}" if composer and index % 3 else None,
                piece_number=f"no{index % 4}" if composer and index % 2 else None,
            )
        )
    (root / "catalog.tsv").write_text(write_catalog(catalog), encoding="utf-8")
    return sorted(source_ids)
