import math
import random
import struct

import numpy as np
import pytest

from noisyamt.audio import AudioBuffer
from noisyamt.augmentation import SnrGrid, snr_levels
from noisyamt.harness import SweepResult
from noisyamt.transcription import EvalResult


def sine(amplitude=0.5, freq=440.0, sample_rate=16_000, seconds=1.0):
    t = np.arange(int(sample_rate * seconds)) / sample_rate
    return AudioBuffer(amplitude * np.sin(2 * math.pi * freq * t), sample_rate)


@pytest.fixture
def sine_buffer():
    return sine


def varint(value):
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(out))


def smf(tracks, division=480, fmt=None):
    """Assemble a Standard MIDI File from per-track lists of (delta, event bytes)."""
    if fmt is None:
        fmt = 0 if len(tracks) == 1 else 1
    out = b"MThd" + struct.pack(">IHHH", 6, fmt, len(tracks), division)
    for events in tracks:
        body = b"".join(varint(delta) + ev for delta, ev in events)
        out += b"MTrk" + struct.pack(">I", len(body)) + body
    return out


def tempo_event(bpm=None, us=None):
    us = round(60e6 / bpm) if us is None else us
    return b"\xFF\x51\x03" + us.to_bytes(3, "big")


END_OF_TRACK = b"\xFF\x2F\x00"


def planted_sweep(effects, n_rec=8, levels=None, eps=1e-3):
    """Baseline scores random; variants beat it by 0.1 exactly at the given levels.

    Elsewhere the variant differs by an alternating ±eps jitter whose mean is
    zero, so t is 0 there.
    """
    levels = levels or snr_levels(SnrGrid())
    rng = random.Random(0)
    cells = {}
    for r in range(n_rec):
        for lv in levels:
            base = {m: 0.3 + 0.5 * rng.random() for m in ("precision", "recall", "f1")}
            cells["base", f"rec{r}", float(lv)] = EvalResult(1, 0, 0, base["precision"], base["recall"], base["f1"])
            for variant, per_metric in effects.items():
                vals = {}
                for m in ("precision", "recall", "f1"):
                    lo, hi = per_metric.get(m, (None, None))
                    sign = 1 if r % 2 else -1
                    if lo is not None and lo <= lv <= hi:
                        vals[m] = base[m] + 0.1 + sign * eps * (1 + 0.1 * r)
                    else:
                        vals[m] = base[m] + sign * eps
                cells[variant, f"rec{r}", float(lv)] = EvalResult(1, 0, 0, vals["precision"], vals["recall"], vals["f1"])
    return SweepResult(cells, {"levels": levels})


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
