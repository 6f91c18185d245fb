"""Core note types shared by the whole pipeline.

A resolved note carries absolute millisecond timing and one of 13
instrument classes (12 pitched families plus percussion). Note lists are
kept in a canonical total order so that every downstream stage is
deterministic regardless of how the notes were produced.
"""

from __future__ import annotations

from dataclasses import dataclass, field

PITCHED_CLASSES: tuple[str, ...] = (
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
)
DRUM_CLASS = "drum"
ALL_CLASSES: tuple[str, ...] = PITCHED_CLASSES + (DRUM_CLASS,)

_CLASS_INDEX = {name: i for i, name in enumerate(ALL_CLASSES)}

# General MIDI program ranges condensed into the 12 pitched classes.
PROGRAM_CLASS_RANGES: tuple[tuple[int, int, str], ...] = (
    (0, 7, "piano"),
    (8, 15, "chromatic"),
    (16, 23, "organ"),
    (24, 31, "guitar"),
    (32, 39, "bass"),
    (40, 51, "strings"),
    (52, 55, "voice"),
    (56, 63, "brass"),
    (64, 71, "reed"),
    (72, 79, "pipe"),
    (80, 95, "synth"),
    (96, 127, "other"),
)

# Representative program emitted when rendering a class back to MIDI.
CLASS_PROGRAMS: dict[str, int] = {name: lo for lo, _hi, name in PROGRAM_CLASS_RANGES}

_PROGRAM_TO_CLASS: list[str] = []
for _lo, _hi, _name in PROGRAM_CLASS_RANGES:
    _PROGRAM_TO_CLASS.extend([_name] * (_hi - _lo + 1))
assert len(_PROGRAM_TO_CLASS) == 128


def program_to_class(program: int) -> str:
    """Map a MIDI program number (0-127) to its pitched instrument class."""
    if not 0 <= program <= 127:
        raise ValueError(f"program out of range: {program}")
    return _PROGRAM_TO_CLASS[program]


def class_index(instrument_class: str) -> int:
    """Stable ordering index for an instrument class name."""
    try:
        return _CLASS_INDEX[instrument_class]
    except KeyError:
        raise ValueError(f"unknown instrument class: {instrument_class!r}") from None


@dataclass(frozen=True, slots=True)
class Note:
    """One resolved musical note with absolute millisecond timing.

    Pitched notes have offset_ms > onset_ms. Percussion notes carry an
    onset only, encoded as offset_ms == onset_ms.
    """

    instrument_class: str
    pitch: int
    velocity: int
    onset_ms: int
    offset_ms: int

    def __post_init__(self) -> None:
        if self.instrument_class not in _CLASS_INDEX:
            raise ValueError(f"unknown instrument class: {self.instrument_class!r}")
        if not 0 <= self.pitch <= 127:
            raise ValueError(f"pitch out of range: {self.pitch}")
        if not 1 <= self.velocity <= 127:
            raise ValueError(f"velocity out of range: {self.velocity}")
        if self.onset_ms < 0:
            raise ValueError(f"negative onset: {self.onset_ms}")
        if self.is_drum:
            if self.offset_ms != self.onset_ms:
                raise ValueError("percussion notes carry onset only")
        elif self.offset_ms <= self.onset_ms:
            raise ValueError(
                f"pitched note must end after it starts: "
                f"onset={self.onset_ms} offset={self.offset_ms}"
            )

    @property
    def is_drum(self) -> bool:
        return self.instrument_class == DRUM_CLASS

    @property
    def duration_ms(self) -> int:
        return self.offset_ms - self.onset_ms

    def sort_key(self) -> tuple[int, int, int, int, int]:
        # (onset, pitch, class) is the contractual tie-break; offset and
        # velocity extend it so the order is total for any note multiset.
        return (
            self.onset_ms,
            self.pitch,
            _CLASS_INDEX[self.instrument_class],
            self.offset_ms,
            self.velocity,
        )


@dataclass(slots=True)
class NoteList:
    """Canonically ordered list of notes from a single source file.

    Warnings collected while producing the list (dangling events, dropped
    artifacts) ride along but never participate in equality.
    """

    notes: list[Note] = field(default_factory=list)
    source_id: str = ""
    warnings: list[str] = field(default_factory=list, compare=False)

    @classmethod
    def from_notes(
        cls,
        notes: list[Note],
        source_id: str = "",
        warnings: list[str] | None = None,
    ) -> "NoteList":
        return cls(
            notes=sorted(notes, key=Note.sort_key),
            source_id=source_id,
            warnings=warnings if warnings is not None else [],
        )

    def __len__(self) -> int:
        return len(self.notes)

    def __iter__(self):
        return iter(self.notes)

    def is_sorted(self) -> bool:
        keys = [n.sort_key() for n in self.notes]
        return all(a <= b for a, b in zip(keys, keys[1:]))

    def slice(self, start: int, stop: int) -> "NoteList":
        """Contiguous sub-list; keeps source identity, drops warnings."""
        return NoteList(notes=self.notes[start:stop], source_id=self.source_id)
