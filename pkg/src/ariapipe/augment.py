"""Deterministic, seedable note-list augmentations.

Three transforms — pitch transposition, tempo stretching, velocity jitter —
operate on resolved notes before any quantization, so repeated application
does not compound grid error. Randomized draws come from counter-based
Philox streams keyed by (seed, stream_id): the same key reproduces the
same output on any platform, and distinct files augment concurrently
without contention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .notes import Note, NoteList

# Counter-block offsets carving independent substreams out of one key.
BLOCK_AUGMENT = 0
BLOCK_VIEW_GEOMETRY = 1
BLOCK_VIEW_A = 2
BLOCK_VIEW_B = 3


def rng_stream(seed: int, stream_id: int, block: int = BLOCK_AUGMENT) -> np.random.Generator:
    """Philox generator for (seed, stream_id), at a disjoint counter block."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, stream_id & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    counter = np.array([0, 0, 0, block], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


@dataclass(frozen=True, slots=True)
class AugmentConfig:
    max_transpose: int = 5
    tempo_range: tuple[float, float] = (0.8, 1.2)
    max_velocity_jitter: int = 10
    seed: int = 0

    def __post_init__(self) -> None:
        lo, hi = self.tempo_range
        if lo <= 0 or hi <= 0 or lo > hi:
            raise ValueError(f"invalid tempo range: {self.tempo_range}")
        if self.max_transpose < 0 or self.max_velocity_jitter < 0:
            raise ValueError("augmentation bounds must be non-negative")


def _round_half_up(value: float) -> int:
    # Away-from-zero rounding; all note times are non-negative.
    return int(math.floor(value + 0.5))


def transpose(notes: NoteList, semitones: int) -> NoteList:
    """Shift pitched notes by `semitones`, folding out-of-range pitches back
    inside [0, 127] by whole octaves. Percussion and timing are untouched."""
    if abs(semitones) > 127:
        raise ValueError(f"transposition too large: {semitones}")
    out = []
    for n in notes:
        if n.is_drum:
            out.append(n)
            continue
        pitch = n.pitch + semitones
        while pitch > 127:
            pitch -= 12
        while pitch < 0:
            pitch += 12
        out.append(Note(n.instrument_class, pitch, n.velocity, n.onset_ms, n.offset_ms))
    return NoteList.from_notes(out, source_id=notes.source_id)


def stretch_tempo(notes: NoteList, factor: float) -> NoteList:
    """Scale all times by `factor`, rounding to integer milliseconds.

    Pitched offsets are kept at least 1 ms after their onset so extreme
    factors cannot collapse a note to zero length.
    """
    if not factor > 0:
        raise ValueError(f"tempo factor must be positive: {factor}")
    out = []
    for n in notes:
        onset = _round_half_up(n.onset_ms * factor)
        if n.is_drum:
            offset = onset
        else:
            offset = max(_round_half_up(n.offset_ms * factor), onset + 1)
        out.append(Note(n.instrument_class, n.pitch, n.velocity, onset, offset))
    return NoteList.from_notes(out, source_id=notes.source_id)


def jitter_velocity(notes: NoteList, delta: int) -> NoteList:
    """Shift pitched-note velocities by `delta`, clamped into [1, 127]."""
    if abs(delta) > 127:
        raise ValueError(f"velocity jitter too large: {delta}")
    out = []
    for n in notes:
        if n.is_drum:
            out.append(n)
            continue
        velocity = min(max(n.velocity + delta, 1), 127)
        out.append(Note(n.instrument_class, n.pitch, velocity, n.onset_ms, n.offset_ms))
    return NoteList.from_notes(out, source_id=notes.source_id)


def draw_augment_params(
    config: AugmentConfig, rng: np.random.Generator
) -> tuple[int, float, int]:
    """Draw (semitones, tempo factor, velocity delta) in a fixed order."""
    semitones = int(rng.integers(-config.max_transpose, config.max_transpose + 1))
    factor = float(rng.uniform(config.tempo_range[0], config.tempo_range[1]))
    delta = int(rng.integers(-config.max_velocity_jitter, config.max_velocity_jitter + 1))
    return semitones, factor, delta


def apply_augment(
    notes: NoteList, config: AugmentConfig, rng: np.random.Generator
) -> NoteList:
    semitones, factor, delta = draw_augment_params(config, rng)
    return jitter_velocity(stretch_tempo(transpose(notes, semitones), factor), delta)


def random_augment(notes: NoteList, config: AugmentConfig, stream_id: int) -> NoteList:
    """Apply all three augmentations with draws keyed by (seed, stream_id).

    Identical (seed, stream_id) pairs reproduce identical output across
    runs, platforms, and process boundaries.
    """
    return apply_augment(notes, config, rng_stream(config.seed, stream_id))
