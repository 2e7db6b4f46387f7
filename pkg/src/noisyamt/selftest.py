"""Synthetic piano-like corpus and the mock-transcriber end-to-end demo."""

import json
import math
import os

import numpy as np

from .audio import AudioBuffer, write_wav
from .augmentation import SnrGrid, derive_seed, format_level, snr_levels
from .harness import Manifest, MockTranscriber, Record, compare_systems, run_sweep, write_manifest_csv
from .report import render_snr_curves, series_from_sweep, summary_markdown
from .transcription import NoteEvent, NoteList, write_midi

SAMPLE_RATE = 16_000
# 0.0125 s is a whole number of ticks at 480 ppq / 120 bpm, so MIDI round-trips exactly
ONSET_QUANTUM = 0.0125


def synth_notes(seed, n_notes=40, duration_s=4.0):
    rng = np.random.Generator(np.random.PCG64(seed))
    slots = int((duration_s - 0.5) / ONSET_QUANTUM)
    notes = []
    for _ in range(n_notes):
        onset = int(rng.integers(0, slots)) * ONSET_QUANTUM
        length = int(rng.integers(8, 40)) * ONSET_QUANTUM
        notes.append(NoteEvent(onset, min(onset + length, duration_s), int(rng.integers(36, 97)),
                               int(rng.integers(40, 110))))
    return NoteList(notes)


def synth_audio(notes, duration_s=4.0, sample_rate=SAMPLE_RATE):
    """Decaying sinusoids with two harmonics; peak-normalised to 0.5."""
    n = int(duration_s * sample_rate)
    t = np.arange(n) / sample_rate
    out = np.zeros(n)
    for note in notes:
        f0 = 440.0 * 2.0 ** ((note.pitch - 69) / 12)
        start = int(note.onset_s * sample_rate)
        stop = min(n, int(note.offset_s * sample_rate))
        tt = t[start:stop] - note.onset_s
        env = (note.velocity or 80) / 127 * np.exp(-3.0 * tt)
        out[start:stop] += env * (np.sin(2 * math.pi * f0 * tt) + 0.3 * np.sin(4 * math.pi * f0 * tt))
    peak = np.max(np.abs(out))
    return AudioBuffer(out * (0.5 / peak) if peak > 0 else out, sample_rate)


def build_corpus(out_dir, n_recordings=5, seed=0):
    os.makedirs(out_dir, exist_ok=True)
    records = []
    for i in range(n_recordings):
        rid = f"synth{i:02d}"
        notes = synth_notes(derive_seed(seed, "synth", rid))
        audio_path = os.path.join(out_dir, f"{rid}.wav")
        midi_path = os.path.join(out_dir, f"{rid}.mid")
        write_wav(synth_audio(notes), audio_path)
        write_midi(notes, midi_path)
        records.append(Record(rid, audio_path, midi_path, "test"))
    manifest = Manifest(tuple(records))
    write_manifest_csv(manifest, os.path.join(out_dir, "manifest.csv"))
    return manifest


def expected_mock_f1(mock, snr_db):
    """F1 expected from a mock whose jitter stays inside the onset tolerance.

    Every kept note matches, so precision is 1 and recall is the keep probability.
    """
    q = mock.keep_probability(snr_db)
    return 2 * q / (1 + q)


def expected_mock_f1_stderr(mock, snr_db, notes_per_recording):
    """Delta-method standard error of the across-recording mean F1.

    Recall on a recording with ``n`` notes is Binomial(n, q)/n and
    F1 = 2r/(1+r), whose slope at ``q`` is 2/(1+q)**2.
    """
    q = mock.keep_probability(snr_db)
    slope = 2.0 / (1.0 + q) ** 2
    var = sum(slope ** 2 * q * (1 - q) / n for n in notes_per_recording) / len(notes_per_recording) ** 2
    return math.sqrt(var)


def tracks_expectation(observed, mock, notes_per_recording, n_sigma=4.0):
    """Observed mean F1 within ``n_sigma`` analytic standard errors of the expectation."""
    for snr, mean, _ in observed:
        se = expected_mock_f1_stderr(mock, snr, notes_per_recording)
        if abs(mean - expected_mock_f1(mock, snr)) > n_sigma * se + 1e-12:
            return False
    return True


def run_selftest(out_dir, seed=0, workers=1, n_recordings=5, grid=SnrGrid(), tolerance_s=0.05):
    """Build the corpus, sweep two mock systems, write all artifacts.

    Returns a dict of named checks (bool) plus output paths.
    """
    corpus_dir = os.path.join(out_dir, "corpus")
    manifest = build_corpus(corpus_dir, n_recordings, seed)
    baseline = MockTranscriber("mock")
    robust = MockTranscriber("mock-robust", snr0=-3.0)
    sweep = run_sweep(manifest, [baseline, robust], grid, seed, tolerance_s,
                      cache_dir=os.path.join(out_dir, "cache"), workers=workers)

    paths = {
        "sweep_json": os.path.join(out_dir, "sweep.json"),
        "sweep_csv": os.path.join(out_dir, "sweep.csv"),
        "svg": os.path.join(out_dir, "f1_vs_snr.svg"),
        "expected": os.path.join(out_dir, "expected_f1.csv"),
        "significance_md": os.path.join(out_dir, "significance.md"),
        "significance_json": os.path.join(out_dir, "significance.json"),
        "summary_md": os.path.join(out_dir, "summary.md"),
    }
    sweep.save(paths["sweep_json"], paths["sweep_csv"])

    series = series_from_sweep(sweep, "f1")
    levels = snr_levels(grid)
    expected = [(lv, expected_mock_f1(baseline, lv), 0.0) for lv in levels]
    render_snr_curves(series, paths["svg"], title="Mock transcribers, onset F1 vs SNR")
    with open(paths["expected"], "w", encoding="utf-8", newline="\n") as fh:
        fh.write("snr_db,expected_f1\n")
        for lv, f, _ in expected:
            fh.write(f"{format_level(lv)},{f!r}\n")

    table = compare_systems(sweep, "mock", ["mock-robust"], grid=grid)
    with open(paths["significance_md"], "w", encoding="utf-8") as fh:
        fh.write(table.to_markdown(row_label="system"))
    with open(paths["significance_json"], "w", encoding="utf-8") as fh:
        json.dump(table.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(paths["summary_md"], "w", encoding="utf-8") as fh:
        fh.write(summary_markdown({m: series_from_sweep(sweep, m) for m in ("precision", "recall", "f1")}))

    observed = {s.label: s for s in series}["mock"].points
    note_counts = [len(synth_notes(derive_seed(seed, "synth", r.id))) for r in manifest]
    checks = {
        "no_failures": not sweep.failures,
        "cell_count": len(sweep.cells) == 2 * n_recordings * len(levels),
        "expected_f1_monotone": all(b[1] >= a[1] for a, b in zip(expected, expected[1:])),
        "observed_f1_tracks_expectation": tracks_expectation(observed, baseline, note_counts),
    }
    return {"checks": checks, "paths": paths, "sweep": sweep, "table": table}
