"""Note sequences, MIDI/TSV readers and onset-based note scoring."""

import bisect
import logging
import struct
from collections import defaultdict, deque
from dataclasses import dataclass

from .errors import MidiParseError, NotesFormatError

logger = logging.getLogger(__name__)

DEFAULT_ONSET_TOLERANCE = 0.050
# absorbs float error so a difference nominally equal to the tolerance still matches
ONSET_EPS = 1e-9
DEFAULT_TEMPO_US = 500_000
MIN_NOTE_S = 1e-3


@dataclass(frozen=True, order=True)
class NoteEvent:
    onset_s: float
    offset_s: float
    pitch: int
    velocity: int | None = None

    def __post_init__(self):
        if not self.onset_s >= 0:
            raise ValueError(f"onset must be non-negative, got {self.onset_s}")
        if not self.offset_s > self.onset_s:
            raise ValueError(f"offset {self.offset_s} must exceed onset {self.onset_s}")
        if int(self.pitch) != self.pitch or not 0 <= self.pitch <= 127:
            raise ValueError(f"pitch must be an integer in 0..127, got {self.pitch}")
        if self.velocity is not None and not 1 <= self.velocity <= 127:
            raise ValueError(f"velocity must be in 1..127, got {self.velocity}")


class NoteList(tuple):
    """Immutable, sorted-by-(onset, pitch) sequence of NoteEvent."""

    def __new__(cls, notes=()):
        notes = sorted(notes, key=lambda n: (n.onset_s, n.pitch, n.offset_s))
        return super().__new__(cls, notes)

    def __repr__(self):
        return f"NoteList({list(self)!r})"

    @property
    def onsets(self):
        return [n.onset_s for n in self]

    @property
    def pitches(self):
        return [n.pitch for n in self]


@dataclass(frozen=True)
class EvalResult:
    true_positives: int
    false_positives: int
    false_negatives: int
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, tp, fp, fn):
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        return cls(tp, fp, fn, p, r, f)

    def to_dict(self):
        return {
            "true_positives": self.true_positives,
            "false_positives": self.false_positives,
            "false_negatives": self.false_negatives,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["true_positives"]), int(d["false_positives"]), int(d["false_negatives"]),
                   float(d["precision"]), float(d["recall"]), float(d["f1"]))


# --- TSV -------------------------------------------------------------------


def read_notes_tsv(path):
    """``onset<TAB>offset<TAB>pitch[<TAB>velocity]`` per line; ``#`` comments."""
    notes = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            fields = text.split("\t")
            if len(fields) not in (3, 4):
                raise NotesFormatError(lineno, f"expected 3 or 4 tab-separated fields, got {len(fields)}")
            try:
                onset, offset = float(fields[0]), float(fields[1])
                pitch = _parse_int(fields[2])
                velocity = _parse_int(fields[3]) if len(fields) == 4 else None
            except ValueError as exc:
                raise NotesFormatError(lineno, f"non-numeric field ({exc})") from None
            try:
                notes.append(NoteEvent(onset, offset, pitch, velocity))
            except ValueError as exc:
                raise NotesFormatError(lineno, str(exc)) from None
    return NoteList(notes)


def _parse_int(text):
    value = float(text)
    if not value.is_integer():
        raise ValueError(f"{text!r} is not an integer")
    return int(value)


def write_notes_tsv(notes, path):
    with open(path, "w", encoding="utf-8") as fh:
        for n in notes:
            row = [repr(float(n.onset_s)), repr(float(n.offset_s)), str(n.pitch)]
            if n.velocity is not None:
                row.append(str(n.velocity))
            fh.write("\t".join(row) + "\n")


# --- MIDI ------------------------------------------------------------------


@dataclass
class MidiParse:
    notes: NoteList
    unmatched_note_offs: int
    format: int
    ticks_per_beat: int


def _read_varint(data, pos, end):
    value = 0
    for i in range(4):
        if pos >= end:
            raise MidiParseError(pos, "truncated variable-length quantity")
        byte = data[pos]
        pos += 1
        value = (value << 7) | (byte & 0x7F)
        if not byte & 0x80:
            return value, pos
    raise MidiParseError(pos - 1, "variable-length quantity longer than 4 bytes")


_DATA_LEN = {0x80: 2, 0x90: 2, 0xA0: 2, 0xB0: 2, 0xC0: 1, 0xD0: 1, 0xE0: 2}


def _parse_track(data, pos, end):
    """Yield ``(tick, kind, payload)``; kind is 'on', 'off' or 'tempo'."""
    tick = 0
    status = None
    events = []
    while pos < end:
        delta, pos = _read_varint(data, pos, end)
        tick += delta
        if pos >= end:
            raise MidiParseError(pos, "event truncated after delta time")
        byte = data[pos]
        if byte == 0xFF:
            if pos + 1 >= end:
                raise MidiParseError(pos, "truncated meta event")
            meta_type = data[pos + 1]
            length, body = _read_varint(data, pos + 2, end)
            if body + length > end:
                raise MidiParseError(pos, "meta event runs past end of track")
            if meta_type == 0x51:
                if length != 3:
                    raise MidiParseError(pos, f"tempo meta event has length {length}")
                events.append((tick, "tempo", int.from_bytes(data[body:body + 3], "big")))
            pos = body + length
            if meta_type == 0x2F:
                events.append((tick, "end", None))
                break
            continue
        if byte in (0xF0, 0xF7):
            length, body = _read_varint(data, pos + 1, end)
            if body + length > end:
                raise MidiParseError(pos, "sysex event runs past end of track")
            pos = body + length
            continue
        if byte & 0x80:
            if byte >= 0xF0:
                raise MidiParseError(pos, f"unexpected system message 0x{byte:02X} in track")
            status = byte
            pos += 1
        elif status is None:
            raise MidiParseError(pos, "running status without a previous status byte")
        n = _DATA_LEN[status & 0xF0]
        if pos + n > end:
            raise MidiParseError(pos, "channel message truncated")
        args = data[pos:pos + n]
        pos += n
        kind = status & 0xF0
        channel = status & 0x0F
        if kind == 0x90 and args[1] > 0:
            events.append((tick, "on", (channel, args[0], args[1])))
        elif kind == 0x80 or (kind == 0x90 and args[1] == 0):
            events.append((tick, "off", (channel, args[0])))
    else:
        events.append((tick, "end", None))
    return events


class TempoMap:
    """Piecewise-constant tempo; converts absolute ticks to seconds."""

    def __init__(self, changes, ticks_per_beat):
        self.ticks_per_beat = ticks_per_beat
        points = {0: DEFAULT_TEMPO_US}
        for tick, tempo in sorted(changes, key=lambda c: c[0]):
            points[tick] = tempo
        self._ticks = sorted(points)
        self._tempos = [points[t] for t in self._ticks]
        self._seconds = [0.0]
        for i in range(1, len(self._ticks)):
            span = self._ticks[i] - self._ticks[i - 1]
            self._seconds.append(self._seconds[-1] + span * self._tempos[i - 1] / 1e6 / ticks_per_beat)

    def seconds(self, tick):
        i = bisect.bisect_right(self._ticks, tick) - 1
        return self._seconds[i] + (tick - self._ticks[i]) * self._tempos[i] / 1e6 / self.ticks_per_beat


def parse_midi(data):
    if len(data) < 14 or data[:4] != b"MThd":
        raise MidiParseError(0, "missing MThd header chunk")
    (hlen,) = struct.unpack_from(">I", data, 4)
    if hlen < 6 or 8 + hlen > len(data):
        raise MidiParseError(4, f"bad header length {hlen}")
    fmt, ntracks, division = struct.unpack_from(">HHH", data, 8)
    if fmt not in (0, 1):
        raise MidiParseError(8, f"unsupported SMF format {fmt}")

    smpte = None
    if division & 0x8000:
        fps = 256 - (division >> 8)
        smpte = fps * (division & 0xFF)
        if smpte == 0:
            raise MidiParseError(12, "zero SMPTE resolution")
    elif division == 0:
        raise MidiParseError(12, "zero ticks per beat")

    pos = 8 + hlen
    tracks = []
    while pos < len(data) and len(tracks) < ntracks:
        if pos + 8 > len(data):
            raise MidiParseError(pos, "truncated chunk header")
        chunk_id = data[pos:pos + 4]
        (length,) = struct.unpack_from(">I", data, pos + 4)
        start, end = pos + 8, pos + 8 + length
        if end > len(data):
            raise MidiParseError(pos, f"chunk {chunk_id!r} runs past end of file")
        if chunk_id == b"MTrk":
            tracks.append(_parse_track(data, start, end))
        pos = end
    if len(tracks) < ntracks:
        raise MidiParseError(pos, f"header declares {ntracks} tracks, found {len(tracks)}")

    if smpte is not None:
        to_seconds = lambda tick: tick / smpte  # noqa: E731
        ticks_per_beat = 0
    else:
        tempo_map = TempoMap([(t, p) for tr in tracks for t, k, p in tr if k == "tempo"], division)
        to_seconds = tempo_map.seconds
        ticks_per_beat = division

    notes = []
    unmatched = 0
    for events in tracks:
        pending = defaultdict(deque)
        last_tick = 0
        for tick, kind, payload in events:
            last_tick = tick
            if kind == "on":
                channel, pitch, velocity = payload
                pending[channel, pitch].append((tick, velocity))
            elif kind == "off":
                queue = pending.get(payload)
                if not queue:
                    unmatched += 1
                    continue
                start, velocity = queue.popleft()
                notes.append(_make_note(to_seconds(start), to_seconds(tick), payload[1], velocity))
        for (channel, pitch), queue in pending.items():
            for start, velocity in queue:
                notes.append(_make_note(to_seconds(start), to_seconds(last_tick), pitch, velocity))
    return MidiParse(NoteList(notes), unmatched, fmt, ticks_per_beat)


def _make_note(onset, offset, pitch, velocity):
    return NoteEvent(onset, max(offset, onset + MIN_NOTE_S), pitch, velocity)


def read_midi(path):
    """Notes of a format 0/1 Standard MIDI File, tempo changes honoured."""
    with open(path, "rb") as fh:
        parsed = parse_midi(fh.read())
    if parsed.unmatched_note_offs:
        logger.warning("%s: ignored %d note-off events without a matching note-on",
                       path, parsed.unmatched_note_offs)
    return parsed.notes


def _varint(value):
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(out))


def write_midi(notes, path, ticks_per_beat=480, tempo_bpm=120.0):
    """Write a format-0 file at one constant tempo (times rounded to ticks)."""
    tempo_us = round(60e6 / tempo_bpm)
    ticks_per_s = ticks_per_beat * 1e6 / tempo_us
    events = []
    for n in notes:
        on = round(n.onset_s * ticks_per_s)
        off = max(on + 1, round(n.offset_s * ticks_per_s))
        vel = n.velocity or 80
        # note-offs sort before note-ons at equal ticks
        events.append((off, 0, bytes([0x80, n.pitch, 0])))
        events.append((on, 1, bytes([0x90, n.pitch, vel])))
    events.sort(key=lambda e: (e[0], e[1], e[2]))
    body = b"\x00\xFF\x51\x03" + tempo_us.to_bytes(3, "big")
    tick = 0
    for at, _, msg in events:
        body += _varint(at - tick) + msg
        tick = at
    body += b"\x00\xFF\x2F\x00"
    with open(path, "wb") as fh:
        fh.write(b"MThd" + struct.pack(">IHHH", 6, 0, 1, ticks_per_beat))
        fh.write(b"MTrk" + struct.pack(">I", len(body)) + body)


def read_notes(path):
    """Dispatch on extension: ``.tsv``/``.txt`` as TSV, anything else as MIDI."""
    if str(path).lower().endswith((".tsv", ".txt")):
        return read_notes_tsv(path)
    return read_midi(path)


# --- matching --------------------------------------------------------------


def _candidate_edges(reference, estimate, tolerance):
    by_pitch = defaultdict(list)
    for j, note in enumerate(estimate):
        by_pitch[note.pitch].append((note.onset_s, j))
    for group in by_pitch.values():
        group.sort()
    keys = {p: [o for o, _ in g] for p, g in by_pitch.items()}

    adj = []
    for ref in reference:
        group = by_pitch.get(ref.pitch, ())
        edges = []
        if group:
            onsets = keys[ref.pitch]
            lo = bisect.bisect_left(onsets, ref.onset_s - tolerance - ONSET_EPS)
            hi = bisect.bisect_right(onsets, ref.onset_s + tolerance + ONSET_EPS)
            edges = sorted(j for o, j in group[lo:hi] if onset_match(ref.onset_s, o, tolerance))
        adj.append(edges)
    return adj


def onset_match(onset_a, onset_b, tolerance):
    return abs(onset_a - onset_b) <= tolerance + ONSET_EPS


def hopcroft_karp(adj, n_right):
    """Maximum-cardinality matching; ``adj[u]`` lists right vertices of left ``u``.

    Returns ``match_left`` with the matched right index or -1 per left vertex.
    """
    n_left = len(adj)
    match_l = [-1] * n_left
    match_r = [-1] * n_right
    while True:
        dist = [-1] * n_left
        queue = [u for u in range(n_left) if match_l[u] == -1]
        for u in queue:
            dist[u] = 0
        found = False
        for u in queue:  # queue grows while iterating
            for v in adj[u]:
                w = match_r[v]
                if w == -1:
                    found = True
                elif dist[w] == -1:
                    dist[w] = dist[u] + 1
                    queue.append(w)
        if not found:
            return match_l

        ptr = [0] * n_left
        for root in range(n_left):
            if match_l[root] != -1:
                continue
            stack, via = [root], []
            while stack:
                u = stack[-1]
                if ptr[u] < len(adj[u]):
                    v = adj[u][ptr[u]]
                    ptr[u] += 1
                    w = match_r[v]
                    if w == -1:
                        via.append(v)
                        for uu, vv in zip(stack, via):
                            match_l[uu] = vv
                            match_r[vv] = uu
                        break
                    if dist[w] == dist[u] + 1:
                        via.append(v)
                        stack.append(w)
                else:
                    dist[u] = -1
                    stack.pop()
                    if via:
                        via.pop()


def match_notes(reference, estimate, onset_tolerance_s=DEFAULT_ONSET_TOLERANCE):
    """Maximum matching of equal-pitch notes whose onsets differ by at most the tolerance.

    Returns a set of ``(ref_index, est_index)`` pairs.
    """
    if not onset_tolerance_s > 0:
        raise ValueError("onset tolerance must be positive")
    adj = _candidate_edges(reference, estimate, onset_tolerance_s)
    match_l = hopcroft_karp(adj, len(estimate))
    return {(i, j) for i, j in enumerate(match_l) if j != -1}


def evaluate(reference, estimate, onset_tolerance_s=DEFAULT_ONSET_TOLERANCE):
    tp = len(match_notes(reference, estimate, onset_tolerance_s))
    return EvalResult.from_counts(tp, len(estimate) - tp, len(reference) - tp)
