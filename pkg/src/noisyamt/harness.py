"""Corpus manifests, transcriber adapters and the (system x recording x SNR) sweep."""

import csv
import hashlib
import io
import json
import logging
import math
import os
import shlex
import subprocess
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .audio import read_wav, write_wav
from .augmentation import (
    SnrGrid,
    augmented_filename,
    derive_seed,
    format_level,
    inject_noise,
    snr_levels,
)
from .errors import (
    CoverageError,
    DegenerateSampleError,
    ManifestSchemaError,
    NoisyAmtError,
    TranscriberFailure,
    TranscriberOutputError,
    TranscriberTimeout,
)
from .stats import METRICS, ScoreSample, SignificanceTable, significant_ranges, t_test
from .transcription import (
    DEFAULT_ONSET_TOLERANCE,
    EvalResult,
    NoteEvent,
    NoteList,
    evaluate,
    read_notes,
)

logger = logging.getLogger(__name__)

SPLITS = ("train", "validation", "test")
REQUIRED_COLUMNS = ("audio_filename", "midi_filename", "split")
CSV_COLUMNS = ("system_id", "recording_id", "snr_db", "tp", "fp", "fn", "precision", "recall", "f1")


# --- manifest --------------------------------------------------------------


@dataclass(frozen=True)
class Record:
    id: str
    audio_path: str
    midi_path: str
    split: str


@dataclass(frozen=True)
class Manifest:
    records: tuple

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, record_id):
        for r in self.records:
            if r.id == record_id:
                return r
        raise KeyError(record_id)

    def reversed(self):
        return Manifest(tuple(reversed(self.records)))


def _record_id(row):
    if row.get("id"):
        return str(row["id"])
    name = row.get("filename") or row.get("audio_filename")
    if not name:
        raise ManifestSchemaError("missing column: id (or filename)")
    return os.path.splitext(os.path.basename(str(name)))[0]


def load_manifest(path, split_filter=None):
    """Read a CSV (header row) or JSON-array manifest.

    Relative audio/MIDI paths resolve against the manifest's directory. Rows
    lacking ``id`` fall back to ``filename`` and then ``audio_filename`` stems.
    """
    if split_filter is not None and split_filter not in SPLITS:
        raise ValueError(f"split must be one of {SPLITS}, got {split_filter!r}")
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if str(path).lower().endswith(".json"):
        rows = json.loads(text)
        if isinstance(rows, dict):
            rows = rows.get("records", [])
        if not isinstance(rows, list):
            raise ManifestSchemaError("JSON manifest must be an array of objects")
        columns = set().union(*(r.keys() for r in rows)) if rows else set()
    else:
        reader = csv.DictReader(io.StringIO(text))
        columns = set(reader.fieldnames or ())
        rows = list(reader)
    if rows:
        for col in REQUIRED_COLUMNS:
            if col not in columns:
                raise ManifestSchemaError(f"missing column: {col}")
        if not columns & {"id", "filename", "audio_filename"}:
            raise ManifestSchemaError("missing column: id (or filename)")

    base = os.path.dirname(os.path.abspath(path))
    records = []
    seen = set()
    for lineno, row in enumerate(rows, start=2):
        split = str(row.get("split", "")).strip()
        if split not in SPLITS:
            raise ManifestSchemaError(f"row {lineno}: unknown split {split!r}")
        rid = _record_id(row)
        if rid in seen:
            raise ManifestSchemaError(f"duplicate id: {rid}")
        seen.add(rid)
        audio, midi = str(row.get("audio_filename") or ""), str(row.get("midi_filename") or "")
        if not audio or not midi:
            raise ManifestSchemaError(f"row {lineno}: empty audio or MIDI path")
        if split_filter is not None and split != split_filter:
            continue
        records.append(Record(rid, os.path.join(base, audio), os.path.join(base, midi), split))
    return Manifest(tuple(records))


def write_manifest_csv(manifest, path):
    base = os.path.dirname(os.path.abspath(path))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "audio_filename", "midi_filename", "split"])
        for r in manifest:
            writer.writerow([r.id, os.path.relpath(r.audio_path, base), os.path.relpath(r.midi_path, base), r.split])


# --- transcribers ----------------------------------------------------------


@dataclass(frozen=True)
class TranscriberSpec:
    """External transcriber run as ``command_template`` with {input}/{output} filled in."""

    system_id: str
    command_template: str
    output_format: str = "tsv"
    timeout_s: float = 600.0

    def __post_init__(self):
        for ph in ("{input}", "{output}"):
            if self.command_template.count(ph) != 1:
                raise ValueError(f"command template must contain {ph} exactly once: {self.command_template!r}")
        if self.output_format not in ("midi", "tsv"):
            raise ValueError(f"output_format must be 'midi' or 'tsv', got {self.output_format!r}")
        if not self.timeout_s > 0:
            raise ValueError("timeout_s must be positive")

    @classmethod
    def parse(cls, text, timeout_s=600.0):
        """``id=command`` or ``id:midi=command`` / ``id:tsv=command``."""
        head, sep, command = text.partition("=")
        if not sep or not head.strip():
            raise ValueError(f"system must look like id=command, got {text!r}")
        system_id, _, fmt = head.strip().partition(":")
        return cls(system_id, command.strip(), fmt or "tsv", timeout_s)

    def fingerprint(self):
        return {"system_id": self.system_id, "command_template": self.command_template,
                "output_format": self.output_format}


def run_transcriber(spec, audio_path, work_dir):
    out_path = os.path.join(work_dir, f"{spec.system_id}.{'mid' if spec.output_format == 'midi' else 'tsv'}")
    argv = [tok.replace("{input}", str(audio_path)).replace("{output}", out_path)
            for tok in shlex.split(spec.command_template)]
    try:
        proc = subprocess.run(argv, capture_output=True, text=True, timeout=spec.timeout_s, cwd=work_dir)
    except subprocess.TimeoutExpired:
        raise TranscriberTimeout(f"{spec.system_id} exceeded {spec.timeout_s} s") from None
    except OSError as exc:
        raise TranscriberFailure(127, str(exc)) from None
    if proc.returncode != 0:
        raise TranscriberFailure(proc.returncode, proc.stderr)
    if not os.path.exists(out_path):
        raise TranscriberOutputError(f"{spec.system_id} did not write {out_path}")
    try:
        return read_notes(out_path)
    except (NoisyAmtError, ValueError, OSError) as exc:
        raise TranscriberOutputError(f"unparsable output from {spec.system_id}: {exc}") from None


@dataclass(frozen=True)
class MockTranscriber:
    """In-process stand-in transcriber whose note drop rate falls with SNR.

    Drop probability is ``p0 + (1 - p0) * sigmoid(-k * (snr - snr0))``;
    surviving onsets are jittered uniformly within ``±jitter_s``.
    """

    system_id: str = "mock"
    p0: float = 0.02
    k: float = 0.4
    snr0: float = 6.0
    jitter_s: float = 0.01

    def __post_init__(self):
        if not 0 <= self.p0 <= 1:
            raise ValueError("p0 must lie in [0, 1]")
        if not self.k > 0:
            raise ValueError("k must be positive")
        if not self.jitter_s >= 0:
            raise ValueError("jitter_s must be non-negative")

    @property
    def params(self):
        return {"p0": self.p0, "k": self.k, "snr0": self.snr0, "jitter_s": self.jitter_s}

    def fingerprint(self):
        return {"system_id": self.system_id, "mock": self.params}

    def keep_probability(self, snr_db):
        return mock_keep_probability(snr_db, self.params)


def mock_keep_probability(snr_db, params):
    z = -params["k"] * (snr_db - params["snr0"])
    sigmoid = 0.5 * (1.0 + math.tanh(z / 2.0))
    return 1.0 - (params["p0"] + (1.0 - params["p0"]) * sigmoid)


def mock_transcriber(reference, snr_db, params, seed):
    rng = np.random.Generator(np.random.PCG64(seed))
    n = len(reference)
    keep = rng.random(n) >= 1.0 - mock_keep_probability(snr_db, params)
    jitter = rng.uniform(-params["jitter_s"], params["jitter_s"], n) if params["jitter_s"] > 0 else np.zeros(n)
    notes = []
    for note, kept, shift in zip(reference, keep, jitter):
        if not kept:
            continue
        onset = max(0.0, note.onset_s + float(shift))
        offset = max(note.offset_s + float(shift), onset + 1e-3)
        notes.append(NoteEvent(onset, offset, note.pitch, note.velocity))
    return NoteList(notes)


# --- sweep -----------------------------------------------------------------


@dataclass
class SweepResult:
    cells: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    # run statistics (timestamps, cache hits); not serialized so output is reproducible
    run_info: dict = field(default_factory=dict, compare=False)

    def systems(self):
        return sorted({k[0] for k in self.cells})

    def recordings(self):
        return sorted({k[1] for k in self.cells})

    def levels(self):
        return sorted({k[2] for k in self.cells})

    def rows(self):
        for (system, rec, snr), r in sorted(self.cells.items()):
            yield {"system_id": system, "recording_id": rec, "snr_db": snr,
                   "tp": r.true_positives, "fp": r.false_positives, "fn": r.false_negatives,
                   "precision": r.precision, "recall": r.recall, "f1": r.f1}

    def to_json(self):
        doc = {"metadata": self.metadata, "cells": list(self.rows()),
               "failures": sorted(self.failures, key=lambda f: (f["system_id"], f["recording_id"], f["snr_db"]))}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in self.rows():
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        return buf.getvalue()

    @classmethod
    def from_rows(cls, rows, metadata=None, failures=None):
        cells = {}
        for row in rows:
            key = (str(row["system_id"]), str(row["recording_id"]), float(row["snr_db"]))
            cells[key] = EvalResult(int(row["tp"]), int(row["fp"]), int(row["fn"]),
                                    float(row["precision"]), float(row["recall"]), float(row["f1"]))
        return cls(cells, dict(metadata or {}), list(failures or []))

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        return cls.from_rows(doc.get("cells", []), doc.get("metadata"), doc.get("failures"))

    @classmethod
    def from_csv(cls, text):
        return cls.from_rows(csv.DictReader(io.StringIO(text)))

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        return cls.from_csv(text) if str(path).lower().endswith(".csv") else cls.from_json(text)

    def save(self, json_path=None, csv_path=None):
        for path, text in ((json_path, self.to_json), (csv_path, self.to_csv)):
            if path is not None:
                with open(path, "w", encoding="utf-8", newline="") as fh:
                    fh.write(text())


def cell_cache_key(system, record_id, snr_db, master_seed, tolerance_s, clip_limit=1.0):
    payload = {"system": system.fingerprint(), "recording_id": record_id, "snr_db": float(snr_db),
               "master_seed": int(master_seed), "tolerance_s": float(tolerance_s), "clip_limit": float(clip_limit)}
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def _read_cache(cache_dir, key):
    path = os.path.join(cache_dir, f"{key}.json")
    try:
        with open(path, encoding="utf-8") as fh:
            return EvalResult.from_dict(json.load(fh)["result"])
    except FileNotFoundError:
        return None
    except (ValueError, KeyError) as exc:
        logger.warning("ignoring corrupt cache entry %s: %s", path, exc)
        return None


def _write_cache(cache_dir, key, identity, result):
    fd, tmp = tempfile.mkstemp(dir=cache_dir, prefix=".tmp-", suffix=".json")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        json.dump({**identity, "result": result.to_dict()}, fh, indent=2, sort_keys=True)
    os.replace(tmp, os.path.join(cache_dir, f"{key}.json"))


def run_sweep(manifest, systems, grid=SnrGrid(), master_seed=0, tolerance_s=DEFAULT_ONSET_TOLERANCE,
              cache_dir=None, workers=1, keep_audio_dir=None, clip_limit=1.0):
    """Evaluate every system on every recording at every grid level.

    Systems are TranscriberSpec (subprocess) or MockTranscriber (in-process).
    Noise seeds are hashed from (master_seed, recording id, level), so the
    result does not depend on ``workers`` or cache state. A failing cell is
    recorded in ``failures`` and never aborts the others.
    """
    records = sorted(manifest, key=lambda r: r.id)
    if not records:
        raise ValueError("manifest is empty")
    ids = [s.system_id for s in systems]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate system ids: {ids}")
    levels = snr_levels(grid)
    for d in (cache_dir, keep_audio_dir):
        if d is not None:
            os.makedirs(d, exist_ok=True)

    started = time.time()
    counters = {"invocations": 0, "cache_hits": 0}
    lock = threading.Lock()
    record_locks = {r.id: threading.Lock() for r in records}
    loaded = {}

    def load(record):
        with record_locks[record.id]:
            if record.id not in loaded:
                try:
                    loaded[record.id] = (read_wav(record.audio_path), read_notes(record.midi_path))
                except Exception as exc:  # noqa: BLE001  reported per cell
                    loaded[record.id] = exc
            inputs = loaded[record.id]
        if isinstance(inputs, Exception):
            raise inputs
        return inputs

    def run_cell(system, record, level):
        key = None
        identity = {"system_id": system.system_id, "recording_id": record.id, "snr_db": level}
        if cache_dir is not None:
            key = cell_cache_key(system, record.id, level, master_seed, tolerance_s, clip_limit)
            cached = _read_cache(cache_dir, key)
            if cached is not None:
                with lock:
                    counters["cache_hits"] += 1
                return cached
        audio, reference = load(record)
        noisy, _ = inject_noise(audio, level, derive_seed(master_seed, record.id, float(level)), clip_limit)
        with lock:
            counters["invocations"] += 1
        if isinstance(system, MockTranscriber):
            if keep_audio_dir is not None:
                write_wav(noisy, os.path.join(keep_audio_dir, augmented_filename(record.id, level)))
            seed = derive_seed(master_seed, system.system_id, record.id, float(level))
            estimate = mock_transcriber(reference, level, system.params, seed)
        else:
            with tempfile.TemporaryDirectory(prefix="noisyamt-") as work:
                audio_dir = keep_audio_dir if keep_audio_dir is not None else work
                wav_path = os.path.join(audio_dir, augmented_filename(record.id, level))
                write_wav(noisy, wav_path)
                estimate = run_transcriber(system, wav_path, work)
        result = evaluate(reference, estimate, tolerance_s)
        if key is not None:
            _write_cache(cache_dir, key, identity, result)
        return result

    jobs = [(s, r, lv) for s in systems for r in records for lv in levels]

    def job(args):
        system, record, level = args
        try:
            return args, run_cell(system, record, level), None
        except Exception as exc:  # noqa: BLE001  failure isolation
            return args, None, f"{type(exc).__name__}: {exc}"

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(job, jobs))
    else:
        outcomes = [job(j) for j in jobs]

    sweep = SweepResult(metadata={
        "master_seed": int(master_seed),
        "grid": str(grid),
        "levels": levels,
        "tolerance_s": float(tolerance_s),
        "clip_limit": float(clip_limit),
        "systems": [s.fingerprint() for s in systems],
        "recordings": [r.id for r in records],
    })
    for (system, record, level), result, error in outcomes:
        if error is None:
            sweep.cells[system.system_id, record.id, float(level)] = result
        else:
            sweep.failures.append({"system_id": system.system_id, "recording_id": record.id,
                                   "snr_db": float(level), "reason": error})
    sweep.failures.sort(key=lambda f: (f["system_id"], f["recording_id"], f["snr_db"]))
    sweep.run_info = {**counters, "failures": len(sweep.failures), "cells": len(sweep.cells),
                      "started": started, "finished": time.time()}
    if sweep.failures:
        logger.warning("sweep finished with %d failed cells", len(sweep.failures))
    return sweep


def _grid_levels(sweep, grid):
    if grid is not None:
        return snr_levels(grid)
    if "levels" in sweep.metadata:
        return [float(x) for x in sweep.metadata["levels"]]
    if "grid" in sweep.metadata:
        return snr_levels(SnrGrid.parse(sweep.metadata["grid"]))
    return sweep.levels()


def compare_systems(sweep, baseline_id, variant_ids, alpha=0.05, test_kind="paired", grid=None):
    """Per-variant, per-metric significant SNR ranges against ``baseline_id``.

    Levels where the test is undefined (zero variance) count as not significant.
    """
    levels = _grid_levels(sweep, grid)
    recordings = sorted({k[1] for k in sweep.cells if k[0] in {baseline_id, *variant_ids}})
    missing = [(s, r, format_level(lv)) for s in (baseline_id, *variant_ids) for r in recordings for lv in levels
               if (s, r, float(lv)) not in sweep.cells]
    if not recordings:
        missing = [(s, "*", "*") for s in (baseline_id, *variant_ids)]
    if missing:
        raise CoverageError(missing)

    def sample(system, level, metric):
        return ScoreSample(system, level, metric,
                           [getattr(sweep.cells[system, r, float(level)], metric) for r in recordings])

    table = SignificanceTable(baseline_id=baseline_id, alpha=alpha, test_kind=test_kind)
    for variant in variant_ids:
        table.rows[variant] = {}
        table.tests[variant] = {}
        for metric in METRICS:
            tests = {}
            for level in levels:
                try:
                    tests[level] = t_test(sample(baseline_id, level, metric), sample(variant, level, metric), test_kind)
                except DegenerateSampleError:
                    tests[level] = None
            table.tests[variant][metric] = tests
            table.rows[variant][metric] = significant_ranges(tests, alpha, metric=metric)
    return table
