"""Absolute-onset MIDI tokenization.

Time is cut into fixed-length segments (5000 ms by default); each new
segment is marked by a ``<T>`` token and note onsets are recorded relative
to the current segment start on a 10 ms grid. A pitched note becomes a
token triple::

    (instrument_class, pitch, velocity)  (onset, ms)  (dur, ms)

and a percussion hit becomes a pair::

    (drum, note_number)  (onset, ms)

Velocities are quantized into 12 bins; note tokens carry the bin's
representative value. The time separating two notes is recoverable from
the token stream alone: count the ``<T>`` tokens between them, multiply by
the segment length, and add the difference of their onset payloads.

Token values are plain strings (special tokens) and tuples (note, drum,
onset, duration), mapped to contiguous integer ids by a `Vocabulary`.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, TypeAlias, Union

from .notes import ALL_CLASSES, DRUM_CLASS, PITCHED_CLASSES, Note, NoteList

Token: TypeAlias = Union[str, tuple]

PAD_TOK = "<PAD>"
BOS_TOK = "<BOS>"
EOS_TOK = "<EOS>"
SEG_TOK = "<T>"
DIM_TOK = "<D>"
SPECIAL_TOKENS: tuple[str, ...] = (PAD_TOK, BOS_TOK, EOS_TOK, SEG_TOK, DIM_TOK)

VELOCITY_BINS = 12
_VELOCITY_WIDTH = 11

VOCAB_FORMAT_VERSION = 1


@dataclass(frozen=True, slots=True)
class TokenizerConfig:
    """Quantization grid and vocabulary bounds."""

    segment_ms: int = 5000
    time_step_ms: int = 10
    max_dur_ms: int = 30000
    drum_velocity: int = 100  # synthetic velocity for reconstructed drum hits

    def __post_init__(self) -> None:
        if self.segment_ms <= 0 or self.time_step_ms <= 0 or self.max_dur_ms <= 0:
            raise ValueError("segment, step, and duration cap must be positive")
        if self.segment_ms % self.time_step_ms or self.max_dur_ms % self.time_step_ms:
            raise ValueError("segment and duration cap must be multiples of the step")
        if not 1 <= self.drum_velocity <= 127:
            raise ValueError("drum_velocity out of range")

    def quantize_ms(self, ms: int) -> int:
        """Round to the step grid, ties away from zero (inputs are >= 0)."""
        step = self.time_step_ms
        return ((ms + step // 2) // step) * step


DEFAULT_CONFIG = TokenizerConfig()


def quantize_velocity(velocity: int) -> tuple[int, int]:
    """Quantize velocity 1-127 into one of 12 bins.

    Returns (bin, representative). bin = velocity // 11 clamped to 11;
    representative = bin * 11 + 5 clamped into [1, 127]. Monotone in the
    input, and representatives map back to their own bin.
    """
    if not 1 <= velocity <= 127:
        raise ValueError(f"velocity out of range: {velocity}")
    bin_ = min(velocity // _VELOCITY_WIDTH, VELOCITY_BINS - 1)
    representative = min(max(bin_ * _VELOCITY_WIDTH + 5, 1), 127)
    return bin_, representative


VELOCITY_REPRESENTATIVES: tuple[int, ...] = tuple(
    min(max(b * _VELOCITY_WIDTH + 5, 1), 127) for b in range(VELOCITY_BINS)
)


class TokenGrammarError(ValueError):
    """Token stream violates the note-group grammar."""

    def __init__(self, index: int, expected: str, found: Token) -> None:
        super().__init__(f"at index {index}: expected {expected}, found {found!r}")
        self.index = index
        self.expected = expected
        self.found = found


def _token_string(token: Token) -> str:
    if isinstance(token, str):
        return token
    if token[0] == "drum":
        return f"drum:{token[1]}"
    if token[0] == "onset":
        return f"onset:{token[1]}"
    if token[0] == "dur":
        return f"dur:{token[1]}"
    cls, pitch, velocity = token
    return f"{cls}:{pitch}:{velocity}"


def _token_from_string(text: str) -> Token:
    if text.startswith("<"):
        return text
    parts = text.split(":")
    if len(parts) == 2:
        kind, value = parts
        return (kind, int(value))
    if len(parts) == 3:
        return (parts[0], int(parts[1]), int(parts[2]))
    raise ValueError(f"unparseable token string: {text!r}")


class Vocabulary:
    """Bijection between tokens and contiguous integer ids.

    Enumeration order is fixed: special tokens, pitched note tokens by
    (class, pitch, velocity bin), drum tokens, onset tokens, duration
    tokens. Two builds from the same config are byte-identical when
    serialized.
    """

    def __init__(self, tokens: list[Token], config: TokenizerConfig) -> None:
        self.tokens: tuple[Token, ...] = tuple(tokens)
        self.config = config
        self.tok_to_id: dict[Token, int] = {t: i for i, t in enumerate(self.tokens)}
        if len(self.tok_to_id) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")
        self.pad_id = self.tok_to_id[PAD_TOK]
        self.bos_id = self.tok_to_id[BOS_TOK]
        self.eos_id = self.tok_to_id[EOS_TOK]
        self.seg_id = self.tok_to_id[SEG_TOK]
        self.dim_id = self.tok_to_id[DIM_TOK]

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def metadata(self) -> dict[str, int]:
        c = self.config
        return {
            "total": len(self.tokens),
            "special": len(SPECIAL_TOKENS),
            "note": len(PITCHED_CLASSES) * 128 * VELOCITY_BINS,
            "drum": 128,
            "onset": c.segment_ms // c.time_step_ms,
            "duration": c.max_dur_ms // c.time_step_ms,
        }

    def encode(self, tokens: Iterable[Token]) -> list[int]:
        to_id = self.tok_to_id
        try:
            return [to_id[t] for t in tokens]
        except KeyError as exc:
            raise ValueError(f"token not in vocabulary: {exc.args[0]!r}") from None

    def decode(self, ids: Iterable[int]) -> list[Token]:
        toks = self.tokens
        return [toks[i] for i in ids]

    def dumps(self) -> str:
        """Versioned, human-readable serialization (token string -> id)."""
        out = io.StringIO()
        out.write(f"# ariapipe-vocabulary v{VOCAB_FORMAT_VERSION}\n")
        c = self.config
        out.write(
            f"# segment_ms={c.segment_ms} time_step_ms={c.time_step_ms} "
            f"max_dur_ms={c.max_dur_ms} drum_velocity={c.drum_velocity}\n"
        )
        for i, token in enumerate(self.tokens):
            out.write(f"{_token_string(token)}\t{i}\n")
        return out.getvalue()

    @classmethod
    def loads(cls, text: str) -> "Vocabulary":
        lines = text.splitlines()
        if not lines or not lines[0].startswith("# ariapipe-vocabulary v"):
            raise ValueError("missing vocabulary version header")
        version = int(lines[0].rsplit("v", 1)[1])
        if version != VOCAB_FORMAT_VERSION:
            raise ValueError(f"unsupported vocabulary version {version}")
        fields = dict(
            kv.split("=") for kv in lines[1].lstrip("# ").split() if "=" in kv
        )
        config = TokenizerConfig(
            segment_ms=int(fields["segment_ms"]),
            time_step_ms=int(fields["time_step_ms"]),
            max_dur_ms=int(fields["max_dur_ms"]),
            drum_velocity=int(fields["drum_velocity"]),
        )
        tokens: list[Token] = []
        for line in lines[2:]:
            if not line:
                continue
            text_part, id_part = line.rsplit("\t", 1)
            if int(id_part) != len(tokens):
                raise ValueError(f"non-contiguous id at line: {line!r}")
            tokens.append(_token_from_string(text_part))
        return cls(tokens, config)


def build_vocabulary(config: TokenizerConfig = DEFAULT_CONFIG) -> Vocabulary:
    """Enumerate the full token set for a config."""
    tokens: list[Token] = list(SPECIAL_TOKENS)
    for cls in PITCHED_CLASSES:
        for pitch in range(128):
            for rep in VELOCITY_REPRESENTATIVES:
                tokens.append((cls, pitch, rep))
    for n in range(128):
        tokens.append(("drum", n))
    for ms in range(0, config.segment_ms, config.time_step_ms):
        tokens.append(("onset", ms))
    for ms in range(config.time_step_ms, config.max_dur_ms + 1, config.time_step_ms):
        tokens.append(("dur", ms))
    return Vocabulary(tokens, config)


@lru_cache(maxsize=4)
def default_vocabulary() -> Vocabulary:
    return build_vocabulary(DEFAULT_CONFIG)


@dataclass(slots=True)
class TokenSeq:
    """Token list plus its integer encoding under a vocabulary."""

    tokens: list[Token]
    ids: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.tokens)


def tokenize(notes: NoteList, vocab: Vocabulary | None = None) -> TokenSeq:
    """Encode a sorted note list into the token schema.

    Onsets quantize to the step grid first; the quantized onset then fixes
    the segment index and within-segment payload, so payloads never
    overflow the segment. One ``<T>`` is emitted per segment crossed, so
    empty segments yield consecutive ``<T>`` tokens. Durations quantize to
    the grid, floored at one step and capped at the configured maximum.
    """
    vocab = vocab or default_vocabulary()
    cfg = vocab.config
    tokens: list[Token] = [BOS_TOK]
    segment = 0
    for note in notes:
        q_onset = cfg.quantize_ms(note.onset_ms)
        seg, within = divmod(q_onset, cfg.segment_ms)
        if seg > segment:
            tokens.extend([SEG_TOK] * (seg - segment))
            segment = seg
        if note.is_drum:
            tokens.append(("drum", note.pitch))
            tokens.append(("onset", within))
        else:
            dur = min(max(cfg.quantize_ms(note.duration_ms), cfg.time_step_ms), cfg.max_dur_ms)
            _, rep = quantize_velocity(note.velocity)
            tokens.append((note.instrument_class, note.pitch, rep))
            tokens.append(("onset", within))
            tokens.append(("dur", dur))
    return TokenSeq(tokens=tokens, ids=vocab.encode(tokens))


_PITCHED_SET = frozenset(PITCHED_CLASSES)


def _expect(tokens: list[Token], i: int, kind: str) -> tuple:
    if i >= len(tokens):
        raise TokenGrammarError(i, kind, "<end of sequence>")
    tok = tokens[i]
    if not (isinstance(tok, tuple) and tok[0] == kind):
        raise TokenGrammarError(i, kind, tok)
    return tok


def detokenize(seq: TokenSeq | list[Token], vocab: Vocabulary | None = None) -> NoteList:
    """Reconstruct notes from a grammatical token sequence.

    Absolute onsets are rebuilt as segment_index * segment_ms + onset
    payload; drum hits take the config's synthetic velocity. Raises
    TokenGrammarError naming the offending index on malformed input.
    """
    vocab = vocab or default_vocabulary()
    cfg = vocab.config
    tokens = seq.tokens if isinstance(seq, TokenSeq) else seq
    notes: list[Note] = []
    segment = 0
    last_within = 0
    i = 0
    if tokens and tokens[0] == BOS_TOK:
        i = 1
    while i < len(tokens):
        tok = tokens[i]
        if tok == SEG_TOK:
            segment += 1
            last_within = 0
            i += 1
            continue
        if tok == DIM_TOK:
            i += 1
            continue
        if tok == EOS_TOK or tok == PAD_TOK:
            for j in range(i + 1, len(tokens)):
                if tokens[j] != PAD_TOK:
                    raise TokenGrammarError(j, PAD_TOK, tokens[j])
            break
        if not isinstance(tok, tuple):
            raise TokenGrammarError(i, "note, drum, or structural token", tok)
        if tok[0] == "drum":
            onset_tok = _expect(tokens, i + 1, "onset")
            onset = segment * cfg.segment_ms + onset_tok[1]
            if onset_tok[1] < last_within:
                raise TokenGrammarError(i + 1, "non-decreasing onset", onset_tok)
            last_within = onset_tok[1]
            notes.append(Note(DRUM_CLASS, tok[1], cfg.drum_velocity, onset, onset))
            i += 2
        elif tok[0] in _PITCHED_SET:
            onset_tok = _expect(tokens, i + 1, "onset")
            dur_tok = _expect(tokens, i + 2, "dur")
            if onset_tok[1] < last_within:
                raise TokenGrammarError(i + 1, "non-decreasing onset", onset_tok)
            last_within = onset_tok[1]
            onset = segment * cfg.segment_ms + onset_tok[1]
            notes.append(Note(tok[0], tok[1], tok[2], onset, onset + dur_tok[1]))
            i += 3
        else:
            raise TokenGrammarError(i, "note, drum, or structural token", tok)
    return NoteList.from_notes(notes)


def note_group_positions(tokens: list[Token]) -> list[int]:
    """Indices of the first token of each note group (note or drum)."""
    positions = []
    for i, tok in enumerate(tokens):
        if isinstance(tok, tuple) and (tok[0] in _PITCHED_SET or tok[0] == "drum"):
            positions.append(i)
    return positions


def elapsed_ms(
    seq: TokenSeq | list[Token],
    i: int,
    j: int,
    config: TokenizerConfig = DEFAULT_CONFIG,
) -> int:
    """Signed milliseconds from note group j to note group i.

    Computed from the token stream alone: segment length times the signed
    count of ``<T>`` tokens strictly between the two groups, plus the
    difference of their onset payloads. Equals the difference of the
    groups' absolute onsets exactly.
    """
    tokens = seq.tokens if isinstance(seq, TokenSeq) else seq
    groups = note_group_positions(tokens)
    if not (0 <= i < len(groups)) or not (0 <= j < len(groups)):
        raise IndexError(
            f"note group index out of range: i={i}, j={j}, groups={len(groups)}"
        )
    seg_index = []
    onsets = []
    segment = 0
    pos_iter = iter(groups)
    next_pos = next(pos_iter, None)
    for idx, tok in enumerate(tokens):
        if tok == SEG_TOK:
            segment += 1
        elif idx == next_pos:
            seg_index.append(segment)
            onset_tok = tokens[idx + 1] if idx + 1 < len(tokens) else None
            if not (isinstance(onset_tok, tuple) and onset_tok[0] == "onset"):
                raise TokenGrammarError(idx + 1, "onset", onset_tok)
            onsets.append(onset_tok[1])
            next_pos = next(pos_iter, None)
    return config.segment_ms * (seg_index[i] - seg_index[j]) + onsets[i] - onsets[j]
