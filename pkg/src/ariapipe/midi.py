"""Standard MIDI File (format 0/1) reading, note resolution, and writing.

Parsing keeps the raw event streams; `resolve_notes` turns them into a
flat, tempo-resolved, pedal-resolved `NoteList` with absolute millisecond
timing. `write_midi` renders a note list back to bytes at a fixed
division/tempo where one tick equals one millisecond, so
``resolve_notes(parse_midi(write_midi(x))) == x`` for any warnings-free x.
"""

from __future__ import annotations

from bisect import bisect_right
from collections import defaultdict, deque
from dataclasses import dataclass, field

from .notes import DRUM_CLASS, Note, NoteList, class_index, CLASS_PROGRAMS, program_to_class

DEFAULT_TEMPO_US = 500_000  # microseconds per quarter note (120 BPM)
SUSTAIN_CC = 64
DRUM_CHANNEL = 9  # MIDI channel 10, zero-indexed

# Pitched notes resolving shorter than this are transcription artifacts.
MIN_NOTE_MS = 10

# Fixed rendering parameters: division 500 at 500000 us/quarter -> 1 tick == 1 ms.
WRITE_DIVISION = 500
WRITE_TEMPO_US = 500_000


class MidiParseError(ValueError):
    """Malformed SMF input; `offset` is the absolute byte position."""

    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True, slots=True)
class MidiEvent:
    """One decoded track event at an absolute tick."""

    tick: int
    kind: str  # note_on | note_off | control | program | tempo | meta | sysex | other
    channel: int = -1
    a: int = 0  # pitch / controller / program / meta type
    b: int = 0  # velocity / controller value
    data: bytes = b""  # opaque payload for meta/sysex/other


@dataclass(slots=True)
class MidiDocument:
    """Decoded SMF: header fields, per-track event lists, merged tempo map."""

    format: int
    division: int
    tracks: list[list[MidiEvent]]
    tempo_map: list[tuple[int, int]] = field(default_factory=list)


def _read_u32(data: bytes, pos: int) -> int:
    if pos + 4 > len(data):
        raise MidiParseError("truncated chunk", pos)
    return int.from_bytes(data[pos : pos + 4], "big")


def _read_u16(data: bytes, pos: int) -> int:
    if pos + 2 > len(data):
        raise MidiParseError("truncated chunk", pos)
    return int.from_bytes(data[pos : pos + 2], "big")


def _read_vlq(data: bytes, pos: int, end: int) -> tuple[int, int]:
    """Variable-length quantity: returns (value, next position)."""
    value = 0
    for _ in range(4):
        if pos >= end:
            raise MidiParseError("truncated variable-length quantity", pos)
        byte = data[pos]
        pos += 1
        value = (value << 7) | (byte & 0x7F)
        if not byte & 0x80:
            return value, pos
    raise MidiParseError("variable-length quantity longer than 4 bytes", pos)


_CHANNEL_DATA_LEN = {0x80: 2, 0x90: 2, 0xA0: 2, 0xB0: 2, 0xC0: 1, 0xD0: 1, 0xE0: 2}


def _parse_track(data: bytes, pos: int, end: int) -> list[MidiEvent]:
    events: list[MidiEvent] = []
    tick = 0
    running_status: int | None = None
    while pos < end:
        delta, pos = _read_vlq(data, pos, end)
        tick += delta
        if pos >= end:
            raise MidiParseError("track ends mid-event", pos)
        status = data[pos]
        if status < 0x80:
            if running_status is None:
                raise MidiParseError(f"data byte {status:#04x} without running status", pos)
            status = running_status
        else:
            pos += 1
        if status == 0xFF:
            running_status = None
            if pos >= end:
                raise MidiParseError("truncated meta event", pos)
            meta_type = data[pos]
            pos += 1
            length, pos = _read_vlq(data, pos, end)
            if pos + length > end:
                raise MidiParseError("meta event overruns track", pos)
            payload = data[pos : pos + length]
            pos += length
            if meta_type == 0x51:
                if length != 3:
                    raise MidiParseError("set_tempo payload must be 3 bytes", pos - length)
                events.append(MidiEvent(tick, "tempo", a=int.from_bytes(payload, "big")))
            elif meta_type == 0x2F:
                break  # end of track
            else:
                events.append(MidiEvent(tick, "meta", a=meta_type, data=payload))
        elif status in (0xF0, 0xF7):
            running_status = None
            length, pos = _read_vlq(data, pos, end)
            if pos + length > end:
                raise MidiParseError("sysex event overruns track", pos)
            events.append(MidiEvent(tick, "sysex", data=data[pos : pos + length]))
            pos += length
        elif status >= 0xF0:
            # System common/realtime inside a file: no data bytes we rely on.
            events.append(MidiEvent(tick, "other", a=status))
        else:
            running_status = status
            hi = status & 0xF0
            channel = status & 0x0F
            n = _CHANNEL_DATA_LEN[hi]
            if pos + n > end:
                raise MidiParseError("channel event overruns track", pos)
            d1 = data[pos]
            d2 = data[pos + 1] if n == 2 else 0
            pos += n
            if d1 > 127 or d2 > 127:
                raise MidiParseError(f"data byte out of range in event {status:#04x}", pos - n)
            if hi == 0x90:
                events.append(MidiEvent(tick, "note_on", channel, d1, d2))
            elif hi == 0x80:
                events.append(MidiEvent(tick, "note_off", channel, d1, d2))
            elif hi == 0xB0:
                events.append(MidiEvent(tick, "control", channel, d1, d2))
            elif hi == 0xC0:
                events.append(MidiEvent(tick, "program", channel, d1))
            else:
                events.append(MidiEvent(tick, "other", channel, d1, d2))
    return events


def parse_midi(data: bytes) -> MidiDocument:
    """Decode an SMF byte stream into a MidiDocument.

    Rejects SMPTE time divisions and formats other than 0/1. Unknown meta
    and sysex events are preserved as opaque payloads; unknown chunk types
    are skipped, as the SMF spec directs.
    """
    if len(data) < 14 or data[0:4] != b"MThd":
        raise MidiParseError("missing MThd header", 0)
    header_len = _read_u32(data, 4)
    if header_len < 6:
        raise MidiParseError(f"header too short: {header_len}", 4)
    fmt = _read_u16(data, 8)
    ntrks = _read_u16(data, 10)
    division = _read_u16(data, 12)
    if fmt not in (0, 1):
        raise MidiParseError(f"unsupported SMF format {fmt}", 8)
    if division & 0x8000:
        raise MidiParseError("SMPTE time division not supported", 12)
    if division == 0:
        raise MidiParseError("zero ticks-per-quarter division", 12)

    pos = 8 + header_len
    tracks: list[list[MidiEvent]] = []
    while pos < len(data) and len(tracks) < ntrks:
        chunk_type = data[pos : pos + 4]
        if len(chunk_type) < 4:
            raise MidiParseError("truncated chunk header", pos)
        chunk_len = _read_u32(data, pos + 4)
        body_start = pos + 8
        body_end = body_start + chunk_len
        if body_end > len(data):
            raise MidiParseError("chunk overruns file", pos)
        if chunk_type == b"MTrk":
            tracks.append(_parse_track(data, body_start, body_end))
        # Unknown chunk types are skipped.
        pos = body_end
    if len(tracks) != ntrks:
        raise MidiParseError(f"expected {ntrks} tracks, found {len(tracks)}", pos)

    tempo_entries: list[tuple[int, int]] = []
    for track in tracks:
        for ev in track:
            if ev.kind == "tempo":
                tempo_entries.append((ev.tick, ev.a))
    tempo_entries.sort(key=lambda t: t[0])
    tempo_map: list[tuple[int, int]] = []
    for tick, us in tempo_entries:
        if tempo_map and tempo_map[-1][0] == tick:
            tempo_map[-1] = (tick, us)  # same-tick duplicates: last wins
        else:
            tempo_map.append((tick, us))
    if not tempo_map or tempo_map[0][0] > 0:
        tempo_map.insert(0, (0, DEFAULT_TEMPO_US))
    return MidiDocument(format=fmt, division=division, tracks=tracks, tempo_map=tempo_map)


class _TempoTimeline:
    """Cumulative tick->microsecond conversion over a tempo map.

    Accumulates exactly in integer arithmetic (microseconds scaled by the
    division); a single rounding to milliseconds happens per query, ties
    away from zero.
    """

    def __init__(self, tempo_map: list[tuple[int, int]], division: int) -> None:
        self.division = division
        self.ticks = [t for t, _ in tempo_map]
        self.tempos = [us for _, us in tempo_map]
        self.cum_scaled_us = [0]
        for i in range(1, len(self.ticks)):
            span = self.ticks[i] - self.ticks[i - 1]
            self.cum_scaled_us.append(
                self.cum_scaled_us[-1] + span * self.tempos[i - 1]
            )

    def ms_at(self, tick: int) -> int:
        i = bisect_right(self.ticks, tick) - 1
        scaled = self.cum_scaled_us[i] + (tick - self.ticks[i]) * self.tempos[i]
        denom = self.division * 1000
        q, r = divmod(scaled, denom)
        return int(q + (1 if 2 * r >= denom else 0))


def ticks_to_ms(tick: int, tempo_map: list[tuple[int, int]], division: int) -> int:
    """Convert an absolute tick to integer milliseconds under a tempo map.

    Piecewise accumulation over tempo regions; an implicit 500000 us/quarter
    region covers tick 0 when the map does not start there.
    """
    if tick < 0:
        raise ValueError(f"negative tick: {tick}")
    if not tempo_map or tempo_map[0][0] > 0:
        tempo_map = [(0, DEFAULT_TEMPO_US)] + list(tempo_map)
    return _TempoTimeline(tempo_map, division).ms_at(tick)


def _merged_events(doc: MidiDocument) -> list[MidiEvent]:
    merged: list[tuple[int, int, int, MidiEvent]] = []
    for track_idx, track in enumerate(doc.tracks):
        for seq, ev in enumerate(track):
            merged.append((ev.tick, track_idx, seq, ev))
    merged.sort(key=lambda item: item[:3])
    return [item[3] for item in merged]


def resolve_notes(doc: MidiDocument, source_id: str = "") -> NoteList:
    """Resolve note_on/note_off streams into absolute-time notes.

    Rules:
      - note_on with velocity 0 counts as note_off.
      - note_on events match the next note_off on the same channel+pitch
        first-in-first-out.
      - While the sustain pedal (CC64 >= 64) is down on a channel, released
        notes are held until the pedal lifts or the same pitch is re-struck,
        whichever comes first.
      - Channel 10 events become percussion notes (onset only).
      - Dangling note_ons close at the final event time with a warning;
        stray note_offs are ignored with a warning.
      - Pitched notes resolving shorter than MIN_NOTE_MS are dropped with a
        warning.
    """
    timeline = _TempoTimeline(doc.tempo_map, doc.division)
    events = _merged_events(doc)
    final_tick = events[-1].tick if events else 0

    channel_program: dict[int, int] = defaultdict(int)
    open_notes: dict[tuple[int, int], deque] = defaultdict(deque)
    pedal_down: set[int] = set()
    # (channel -> pitch -> [(onset_tick, velocity, class)]) released under pedal
    sustained: dict[int, dict[int, list]] = defaultdict(lambda: defaultdict(list))

    raw: list[tuple[int, int, str, int, int]] = []  # (on_tick, off_tick, class, pitch, vel)
    drums: list[tuple[int, int, int]] = []  # (tick, pitch, velocity)
    warnings: list[str] = []

    def close_sustained(channel: int, pitch: int, tick: int) -> None:
        for onset_tick, velocity, cls in sustained[channel].pop(pitch, []):
            raw.append((onset_tick, max(tick, onset_tick), cls, pitch, velocity))

    for ev in events:
        if ev.kind == "program":
            channel_program[ev.channel] = ev.a
        elif ev.kind == "control":
            if ev.a != SUSTAIN_CC or ev.channel == DRUM_CHANNEL:
                continue
            if ev.b >= 64:
                pedal_down.add(ev.channel)
            elif ev.channel in pedal_down:
                pedal_down.discard(ev.channel)
                for pitch in list(sustained[ev.channel]):
                    close_sustained(ev.channel, pitch, ev.tick)
        elif ev.kind == "note_on" and ev.b > 0:
            if ev.channel == DRUM_CHANNEL:
                drums.append((ev.tick, ev.a, ev.b))
                continue
            # Re-striking a pedal-held pitch truncates the held note here.
            if ev.channel in pedal_down and ev.a in sustained[ev.channel]:
                close_sustained(ev.channel, ev.a, ev.tick)
            cls = program_to_class(channel_program[ev.channel])
            open_notes[(ev.channel, ev.a)].append((ev.tick, ev.b, cls))
        elif ev.kind == "note_off" or (ev.kind == "note_on" and ev.b == 0):
            if ev.channel == DRUM_CHANNEL:
                continue
            queue = open_notes.get((ev.channel, ev.a))
            if not queue:
                warnings.append(
                    f"note_off without note_on: channel {ev.channel} pitch {ev.a} tick {ev.tick}"
                )
                continue
            onset_tick, velocity, cls = queue.popleft()
            if ev.channel in pedal_down:
                sustained[ev.channel][ev.a].append((onset_tick, velocity, cls))
            else:
                raw.append((onset_tick, ev.tick, cls, ev.a, velocity))

    for (channel, pitch), queue in open_notes.items():
        for onset_tick, velocity, cls in queue:
            warnings.append(
                f"dangling note_on: channel {channel} pitch {pitch} tick {onset_tick}"
            )
            raw.append((onset_tick, final_tick, cls, pitch, velocity))
    for channel, by_pitch in sustained.items():
        for pitch, held in by_pitch.items():
            for onset_tick, velocity, cls in held:
                # Pedal never released: treat end of stream as the release.
                raw.append((onset_tick, final_tick, cls, pitch, velocity))

    notes: list[Note] = []
    dropped = 0
    for onset_tick, off_tick, cls, pitch, velocity in raw:
        onset_ms = timeline.ms_at(onset_tick)
        offset_ms = timeline.ms_at(off_tick)
        if offset_ms - onset_ms < MIN_NOTE_MS:
            dropped += 1
            continue
        notes.append(Note(cls, pitch, velocity, onset_ms, offset_ms))
    if dropped:
        warnings.append(f"dropped {dropped} notes shorter than {MIN_NOTE_MS} ms")
    for tick, pitch, velocity in drums:
        ms = timeline.ms_at(tick)
        notes.append(Note(DRUM_CLASS, pitch, velocity, ms, ms))

    return NoteList.from_notes(notes, source_id=source_id, warnings=warnings)


def _vlq(value: int) -> bytes:
    if value < 0:
        raise ValueError("negative delta")
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(out))


def _track_chunk(events: list[tuple[int, bytes]]) -> bytes:
    body = bytearray()
    prev_tick = 0
    for tick, payload in events:
        body += _vlq(tick - prev_tick)
        body += payload
        prev_tick = tick
    body += _vlq(0) + b"\xff\x2f\x00"
    return b"MTrk" + len(body).to_bytes(4, "big") + bytes(body)


def write_midi(notes: NoteList) -> bytes:
    """Render a note list to SMF-1 bytes at 1 tick == 1 ms.

    Each instrument class gets its own channel (percussion on channel 10)
    with a representative program change at tick 0.
    """
    classes = sorted(
        {n.instrument_class for n in notes.notes if not n.is_drum}, key=class_index
    )
    channels: dict[str, int] = {}
    next_channel = 0
    for cls in classes:
        if next_channel == DRUM_CHANNEL:
            next_channel += 1
        if next_channel > 15:
            raise ValueError("too many instrument classes for one MIDI file")
        channels[cls] = next_channel
        next_channel += 1

    events: list[tuple[int, int, bytes]] = []  # (tick, order, payload)
    for cls, channel in channels.items():
        events.append((0, 0, bytes([0xC0 | channel, CLASS_PROGRAMS[cls]])))
    for note in notes.notes:
        if note.is_drum:
            channel = DRUM_CHANNEL
            off_tick = note.onset_ms + 1
        else:
            channel = channels[note.instrument_class]
            off_tick = note.offset_ms
        events.append((note.onset_ms, 2, bytes([0x90 | channel, note.pitch, note.velocity])))
        events.append((off_tick, 1, bytes([0x80 | channel, note.pitch, 0x40])))
    events.sort(key=lambda e: (e[0], e[1]))

    tempo_track = _track_chunk(
        [(0, b"\xff\x51\x03" + WRITE_TEMPO_US.to_bytes(3, "big"))]
    )
    note_track = _track_chunk([(tick, payload) for tick, _, payload in events])
    header = b"MThd" + (6).to_bytes(4, "big") + b"".join(
        v.to_bytes(2, "big") for v in (1, 2, WRITE_DIVISION)
    )
    return header + tempo_track + note_track
