"""Model-ready sequence construction.

Three consumers of tokenized files:
  - fixed-length packed windows for pretraining, concatenating files back
    to back with explicit file-boundary offsets;
  - file-aligned finetuning sequences with an end-control token inserted
    near the end of the file;
  - paired contrastive views: two independently augmented contiguous
    slices of the same file.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .augment import (
    BLOCK_VIEW_A,
    BLOCK_VIEW_B,
    BLOCK_VIEW_GEOMETRY,
    AugmentConfig,
    apply_augment,
    rng_stream,
)
from .notes import Note, NoteList
from .tokenizer import (
    BOS_TOK,
    EOS_TOK,
    TokenSeq,
    Vocabulary,
    default_vocabulary,
    note_group_positions,
    tokenize,
)

logger = logging.getLogger(__name__)

DEFAULT_SEQ_LEN = 8192
DEFAULT_DIM_OFFSET = 100

MIN_VIEW_NOTES = 100
MAX_VIEW_NOTES = 650
_START_RESAMPLE_ATTEMPTS = 8

# Typical token-length band for a view; logged, never enforced.
_VIEW_SOFT_RANGE = (300, 2000)


class SliceTooSmallError(ValueError):
    """File has too few notes to cut two minimal view slices."""


@dataclass(slots=True)
class PackedSequence:
    """Fixed-length id window; boundary_offsets mark where files begin."""

    ids: list[int]
    boundary_offsets: list[int] = field(default_factory=list)
    padding: int = 0

    @property
    def is_padded(self) -> bool:
        return self.padding > 0


@dataclass(slots=True)
class ViewPair:
    view_a: TokenSeq
    view_b: TokenSeq
    source_id: str = ""


def pack_pretraining_sequences(
    files: Iterable[TokenSeq],
    seq_len: int = DEFAULT_SEQ_LEN,
    vocab: Vocabulary | None = None,
) -> Iterator[PackedSequence]:
    """Concatenate file id-streams and emit exact fixed-length windows.

    Files may span windows. The final partial window is padded and its pad
    count recorded; no ids are dropped, so total non-pad tokens out equals
    tokens in.
    """
    if seq_len < 2:
        raise ValueError(f"sequence length too small: {seq_len}")
    pad_id = (vocab or default_vocabulary()).pad_id
    buffer: list[int] = []
    boundaries: list[int] = []  # absolute offsets into the buffer
    for seq in files:
        if not seq.ids:
            raise ValueError("cannot pack an empty token sequence")
        boundaries.append(len(buffer))
        buffer.extend(seq.ids)
        while len(buffer) >= seq_len:
            window_bounds = [b for b in boundaries if b < seq_len]
            yield PackedSequence(ids=buffer[:seq_len], boundary_offsets=window_bounds)
            buffer = buffer[seq_len:]
            boundaries = [b - seq_len for b in boundaries if b >= seq_len]
    if buffer:
        padding = seq_len - len(buffer)
        yield PackedSequence(
            ids=buffer + [pad_id] * padding,
            boundary_offsets=boundaries,
            padding=padding,
        )


def unpack_sequences(packed: Iterable[PackedSequence], seq_len: int) -> list[list[int]]:
    """Invert packing: recover the original per-file id streams."""
    streams: list[list[int]] = []
    for window_index, seq in enumerate(packed):
        body = seq.ids[: seq_len - seq.padding]
        cuts = list(seq.boundary_offsets) + [len(body)]
        if not seq.boundary_offsets or seq.boundary_offsets[0] != 0:
            if window_index == 0 and body:
                raise ValueError("first window must start a file")
            cuts = [0] + cuts
            prefix = body[: cuts[1]]
            if prefix and streams:
                streams[-1].extend(prefix)
            cuts = cuts[1:]
        for a, b in zip(cuts, cuts[1:]):
            streams.append(body[a:b])
    return streams


def make_finetune_sequence(
    file: TokenSeq,
    seq_len: int = DEFAULT_SEQ_LEN,
    d_offset: int = DEFAULT_DIM_OFFSET,
    vocab: Vocabulary | None = None,
) -> PackedSequence:
    """One file-aligned training sequence with an end-control token.

    The sequence starts at the file's first token. When the whole file fits
    (strictly, leaving room for the inserted token), a ``<D>`` is placed at
    the note-group boundary closest below `d_offset` tokens before the end,
    clamping to just after the leading ``<BOS>`` for very short files. Files
    at least as long as the window are truncated and get no ``<D>``.
    """
    if seq_len < 2:
        raise ValueError(f"sequence length too small: {seq_len}")
    vocab = vocab or default_vocabulary()
    n = len(file.ids)
    if n >= seq_len:
        return PackedSequence(ids=file.ids[:seq_len], boundary_offsets=[0])

    target = n - d_offset
    floor_pos = 1 if file.tokens and file.tokens[0] == BOS_TOK else 0
    groups = note_group_positions(file.tokens)
    candidates = [g for g in groups if floor_pos <= g <= target]
    d_pos = candidates[-1] if candidates else floor_pos

    ids = file.ids[:d_pos] + [vocab.dim_id] + file.ids[d_pos:]
    padding = seq_len - len(ids)
    return PackedSequence(
        ids=ids + [vocab.pad_id] * padding,
        boundary_offsets=[0],
        padding=padding,
    )


def rebase_to_first_segment(notes: NoteList, segment_ms: int = 5000) -> NoteList:
    """Shift times by whole segments so the first onset lands in segment 0.

    Shifting by a multiple of the segment length preserves each note's
    position within its segment, so a slice does not leak its absolute
    location in the source file.
    """
    if not notes.notes:
        return notes
    shift = (notes.notes[0].onset_ms // segment_ms) * segment_ms
    if shift == 0:
        return notes
    moved = [
        Note(n.instrument_class, n.pitch, n.velocity, n.onset_ms - shift, n.offset_ms - shift)
        for n in notes
    ]
    return NoteList(notes=moved, source_id=notes.source_id)


def _pick_starts(
    geom, n: int, len_a: int, len_b: int, disjoint: bool
) -> tuple[tuple[int, int], tuple[int, int]]:
    """Choose the two slice start indices.

    Overlap is allowed but the starts must differ; if uniform resampling
    keeps colliding, fall back to the two extreme positions (0 and n-len).
    In disjoint mode the slices are placed without overlap and their order
    within the file is randomized.
    """
    if disjoint:
        start_a = int(geom.integers(0, n - len_a - len_b + 1))
        start_b = int(geom.integers(start_a + len_a, n - len_b + 1))
        if geom.integers(0, 2):
            return (start_b, len_b), (start_a, len_a)
        return (start_a, len_a), (start_b, len_b)
    start_a = int(geom.integers(0, n - len_a + 1))
    start_b = start_a
    for _ in range(_START_RESAMPLE_ATTEMPTS):
        start_b = int(geom.integers(0, n - len_b + 1))
        if start_b != start_a:
            break
    if start_b == start_a:
        start_a, start_b = 0, n - len_b
    return (start_a, len_a), (start_b, len_b)


def draw_contrastive_views(
    notes: NoteList,
    config: AugmentConfig,
    stream_id: int,
    vocab: Vocabulary | None = None,
    disjoint: bool = False,
) -> ViewPair:
    """Cut, augment, and tokenize two views of one file.

    Slice lengths are drawn uniformly from [100, 650] and clamped to half
    the file so two distinct slices always exist; start indices are drawn
    uniformly and must differ (overlap is allowed unless `disjoint`). Each
    slice is augmented independently, rebased into segment 0, tokenized,
    and terminated with ``<EOS>``. Deterministic in (config.seed, stream_id).
    """
    vocab = vocab or default_vocabulary()
    n = len(notes)
    if n < 2 * MIN_VIEW_NOTES:
        raise SliceTooSmallError(
            f"{notes.source_id or 'input'}: need at least {2 * MIN_VIEW_NOTES} notes, got {n}"
        )
    geom = rng_stream(config.seed, stream_id, block=BLOCK_VIEW_GEOMETRY)
    len_a = min(int(geom.integers(MIN_VIEW_NOTES, MAX_VIEW_NOTES + 1)), n // 2)
    len_b = min(int(geom.integers(MIN_VIEW_NOTES, MAX_VIEW_NOTES + 1)), n // 2)
    (start_a, len_a), (start_b, len_b) = _pick_starts(geom, n, len_a, len_b, disjoint)

    views = []
    for start, length, block in (
        (start_a, len_a, BLOCK_VIEW_A),
        (start_b, len_b, BLOCK_VIEW_B),
    ):
        window = notes.slice(start, start + length)
        augmented = apply_augment(
            window, config, rng_stream(config.seed, stream_id, block=block)
        )
        rebased = rebase_to_first_segment(augmented, vocab.config.segment_ms)
        seq = tokenize(rebased, vocab)
        seq.tokens.append(EOS_TOK)
        seq.ids.append(vocab.eos_id)
        if not _VIEW_SOFT_RANGE[0] <= len(seq.ids) <= _VIEW_SOFT_RANGE[1]:
            logger.debug(
                "view length %d outside typical band %s for %s",
                len(seq.ids),
                _VIEW_SOFT_RANGE,
                notes.source_id,
            )
        views.append(seq)
    return ViewPair(view_a=views[0], view_b=views[1], source_id=notes.source_id)
