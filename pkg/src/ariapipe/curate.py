"""Dataset hygiene: per-file quality heuristics and catalog-level dedup.

Quality metrics (note density, pitch-class and duration entropy, silence
gaps, n-gram repetition) flag degenerate transcriptions; the dedup rule
bounds how often any single composition can appear for heavily represented
composers.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field, fields

from .notes import NoteList

DEDUP_COMPOSER_THRESHOLD = 250  # strict >: composers at the threshold keep everything
DEDUP_KEEP_PER_PIECE = 10
DURATION_BUCKET_CAP_MS = 5000
DEFAULT_NGRAM_ORDER = 8


class DegenerateInputError(ValueError):
    """Metric undefined for this input (empty, unpitched, or too short)."""


@dataclass(frozen=True, slots=True)
class FileMetadata:
    source_id: str
    composer: str | None = None
    opus: str | None = None
    piece_number: str | None = None

    @property
    def has_composition_tags(self) -> bool:
        return self.opus is not None or self.piece_number is not None

    @property
    def piece_key(self) -> tuple[str, str]:
        # Absent tags become distinguished empty values.
        return (self.opus or "", self.piece_number or "")


@dataclass(frozen=True, slots=True)
class FilterThresholds:
    """Bounds per metric; None disables that check."""

    min_note_density: float | None = 0.5
    max_note_density: float | None = 50.0
    min_pitch_entropy: float | None = 1.5
    min_duration_entropy: float | None = 0.5
    max_silence_gap_ms: float | None = 15000.0
    max_repetition_score: float | None = 0.95

    def __post_init__(self) -> None:
        if (
            self.min_note_density is not None
            and self.max_note_density is not None
            and self.min_note_density > self.max_note_density
        ):
            raise ValueError("min note density exceeds max")
        for f in fields(self):
            value = getattr(self, f.name)
            if value is not None and not math.isfinite(value):
                raise ValueError(f"{f.name} must be finite")


@dataclass(slots=True)
class FilterReport:
    source_id: str
    values: dict[str, float] = field(default_factory=dict)
    passed: dict[str, bool] = field(default_factory=dict)
    reasons: list[str] = field(default_factory=list)

    @property
    def overall(self) -> bool:
        return all(self.passed.values())

    def to_dict(self) -> dict:
        return {
            "source_id": self.source_id,
            "values": self.values,
            "passed": self.passed,
            "overall": self.overall,
            "reasons": self.reasons,
        }


def note_density(notes: NoteList) -> float:
    """Notes per second over the onset span, span floored at one second."""
    if not notes.notes:
        raise DegenerateInputError("note density undefined for empty input")
    span_s = max((notes.notes[-1].onset_ms - notes.notes[0].onset_ms) / 1000.0, 1.0)
    return len(notes.notes) / span_s


def _entropy_bits(counts: Counter) -> float:
    total = sum(counts.values())
    h = 0.0
    for c in counts.values():
        p = c / total
        h -= p * math.log2(p)
    return h


def pitch_entropy(notes: NoteList) -> float:
    """Shannon entropy (bits) of the pitch-class (mod 12) distribution.

    Pitch classes rather than raw pitches, so the measure is invariant
    under transposition.
    """
    counts = Counter(n.pitch % 12 for n in notes if not n.is_drum)
    if not counts:
        raise DegenerateInputError("pitch entropy undefined without pitched notes")
    return _entropy_bits(counts)


def duration_entropy(notes: NoteList) -> float:
    """Entropy (bits) over pitched durations on a 10 ms grid, capped at 5 s."""
    counts = Counter(
        min(((n.duration_ms + 5) // 10) * 10, DURATION_BUCKET_CAP_MS)
        for n in notes
        if not n.is_drum
    )
    if not counts:
        raise DegenerateInputError("duration entropy undefined without pitched notes")
    return _entropy_bits(counts)


def max_silence_gap(notes: NoteList) -> int:
    """Longest silence (ms) between consecutive sounding regions.

    A region is the union of the [onset, offset] intervals; the result is 0
    when the span is fully covered.
    """
    if not notes.notes:
        raise DegenerateInputError("silence gap undefined for empty input")
    intervals = sorted((n.onset_ms, n.offset_ms) for n in notes)
    gap = 0
    _, covered_end = intervals[0]
    for onset, offset in intervals[1:]:
        if onset > covered_end:
            gap = max(gap, onset - covered_end)
        covered_end = max(covered_end, offset)
    return gap


def repetition_score(notes: NoteList, n: int = DEFAULT_NGRAM_ORDER) -> float:
    """Repetitiveness in [0, 1] from pitch-interval n-grams.

    Each window of n consecutive pitched notes is characterized by its
    n-1 melodic intervals; the score is 1 - distinct windows / total
    windows. A fully novel line scores near 0, a short loop near 1.
    """
    if n < 2:
        raise ValueError(f"n-gram order must be at least 2: {n}")
    pitches = [note.pitch for note in notes if not note.is_drum]
    if len(pitches) < n:
        raise DegenerateInputError(
            f"repetition score needs at least {n} pitched notes, got {len(pitches)}"
        )
    intervals = [b - a for a, b in zip(pitches, pitches[1:])]
    windows = len(pitches) - n + 1
    distinct = len({tuple(intervals[i : i + n - 1]) for i in range(windows)})
    return 1.0 - distinct / windows


_METRICS = {
    "note_density": note_density,
    "pitch_entropy": pitch_entropy,
    "duration_entropy": duration_entropy,
    "max_silence_gap_ms": max_silence_gap,
    "repetition_score": repetition_score,
}


def apply_quality_filters(notes: NoteList, thresholds: FilterThresholds) -> FilterReport:
    """Evaluate every enabled metric and assemble a verdict.

    A metric that cannot be computed (empty input, no pitched notes, too
    few notes) fails automatically with its reason recorded.
    """
    report = FilterReport(source_id=notes.source_id)
    if not notes.notes:
        report.passed["nonempty"] = False
        report.reasons.append("empty")
        return report

    values: dict[str, float] = {}
    for name, fn in _METRICS.items():
        try:
            values[name] = float(fn(notes))
        except DegenerateInputError as exc:
            values[name] = math.nan
            report.passed[name] = False
            report.reasons.append(f"{name}: {exc}")
    report.values = values

    checks = [
        ("note_density", thresholds.min_note_density, ">="),
        ("note_density", thresholds.max_note_density, "<="),
        ("pitch_entropy", thresholds.min_pitch_entropy, ">="),
        ("duration_entropy", thresholds.min_duration_entropy, ">="),
        ("max_silence_gap_ms", thresholds.max_silence_gap_ms, "<="),
        ("repetition_score", thresholds.max_repetition_score, "<="),
    ]
    for name, bound, op in checks:
        if bound is None or name not in values or math.isnan(values[name]):
            continue
        ok = values[name] >= bound if op == ">=" else values[name] <= bound
        key = f"{'min' if op == '>=' else 'max'}_{name}"
        report.passed[key] = ok
        if not ok:
            report.reasons.append(f"{key}: {values[name]:.4g} vs bound {bound:.4g}")
    return report


@dataclass(frozen=True, slots=True)
class DedupDecision:
    keep: bool
    reason: str


def dedupe_by_opus(catalog: list[FileMetadata]) -> dict[str, DedupDecision]:
    """Bound composition duplication for heavily represented composers.

    For each composer with more than 250 files carrying opus and/or piece
    number tags: keep at most 10 files per (opus, piece number) pair — the
    lexicographically smallest source_ids, for determinism — and discard
    that composer's files lacking both tags. Everything else is kept.
    Order-independent and idempotent.
    """
    by_composer: dict[str, list[FileMetadata]] = defaultdict(list)
    decisions: dict[str, DedupDecision] = {}
    for meta in catalog:
        if meta.composer is None:
            decisions[meta.source_id] = DedupDecision(True, "kept:no_composer")
        else:
            by_composer[meta.composer].append(meta)

    for composer, metas in by_composer.items():
        tagged = [m for m in metas if m.has_composition_tags]
        if len(tagged) <= DEDUP_COMPOSER_THRESHOLD:
            for m in metas:
                decisions[m.source_id] = DedupDecision(True, "kept:composer_below_threshold")
            continue
        by_piece: dict[tuple[str, str], list[str]] = defaultdict(list)
        for m in tagged:
            by_piece[m.piece_key].append(m.source_id)
        for piece_key, source_ids in by_piece.items():
            for rank, source_id in enumerate(sorted(source_ids)):
                if rank < DEDUP_KEEP_PER_PIECE:
                    decisions[source_id] = DedupDecision(True, "kept:within_piece_quota")
                else:
                    decisions[source_id] = DedupDecision(
                        False, f"discard:piece_quota_exceeded:{piece_key[0]}:{piece_key[1]}"
                    )
        for m in metas:
            if not m.has_composition_tags:
                decisions[m.source_id] = DedupDecision(
                    False, "discard:untagged_for_overrepresented_composer"
                )
    return decisions


def read_catalog(text: str) -> list[FileMetadata]:
    """Parse the tab-separated catalog: source_id, composer, opus, piece.

    Empty fields mean the tag is absent.
    """
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ValueError(f"catalog line {lineno}: expected 4 tab-separated fields")
        source_id, composer, opus, piece = parts
        out.append(
            FileMetadata(
                source_id=source_id,
                composer=composer or None,
                opus=opus or None,
                piece_number=piece or None,
            )
        )
    return out


def write_catalog(catalog: list[FileMetadata]) -> str:
    lines = [
        "\t".join(
            (m.source_id, m.composer or "", m.opus or "", m.piece_number or "")
        )
        for m in catalog
    ]
    return "\n".join(lines) + ("\n" if lines else "")
