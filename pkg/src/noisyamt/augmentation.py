"""White-noise injection at an exact SNR, SNR sweep grids and CNR sampling."""

import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .audio import AudioBuffer, ClipReport, hard_clip, power, read_wav, rms, write_wav
from .errors import SilentSignalError

logger = logging.getLogger(__name__)

UINT64_MASK = (1 << 64) - 1
FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _check_seed(seed):
    seed = int(seed)
    if not 0 <= seed <= UINT64_MASK:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


@dataclass(frozen=True)
class SnrGrid:
    lo_db: float = -6.0
    hi_db: float = 45.0
    step_db: float = 3.0

    def __post_init__(self):
        if not self.step_db > 0:
            raise ValueError(f"step_db must be positive, got {self.step_db}")
        if self.lo_db > self.hi_db:
            raise ValueError(f"lo_db {self.lo_db} exceeds hi_db {self.hi_db}")

    @classmethod
    def parse(cls, text):
        """Parse ``lo:hi:step`` (step optional, defaults to 3)."""
        parts = text.split(":")
        if len(parts) not in (2, 3):
            raise ValueError(f"grid must look like lo:hi[:step], got {text!r}")
        return cls(*(float(p) for p in parts))

    def levels(self):
        return snr_levels(self)

    def __str__(self):
        return f"{format_level(self.lo_db)}:{format_level(self.hi_db)}:{format_level(self.step_db)}"


def snr_levels(grid):
    """Ascending levels ``lo, lo+step, ...`` not exceeding ``hi``."""
    count = int(math.floor((grid.hi_db - grid.lo_db) / grid.step_db + 1e-9)) + 1
    return [grid.lo_db + i * grid.step_db for i in range(count)]


def format_level(level):
    level = float(level)
    if level.is_integer():
        return str(int(level))
    return format(level, ".10g")


def parse_cnr(value):
    """Accept ``3``, ``0.5``, ``1/3``, ``inf`` or ``∞``."""
    if isinstance(value, (int, float, Fraction)):
        return value
    text = str(value).strip().lower()
    if text in ("inf", "infinity", "∞", "+inf"):
        return math.inf
    return Fraction(text)


@dataclass(frozen=True)
class CnrPolicy:
    """Clean-to-noise ratio sampling policy.

    A draw is clean with probability ``cnr / (1 + cnr)``; otherwise the SNR
    is uniform on ``[snr_lo_db, snr_hi_db]``.
    """

    cnr: object = 1
    snr_lo_db: float = 0.0
    snr_hi_db: float = 24.0
    seed: int = 0

    def __post_init__(self):
        cnr = parse_cnr(self.cnr)
        if not cnr >= 0:
            raise ValueError(f"cnr must be non-negative, got {cnr}")
        if self.snr_lo_db > self.snr_hi_db:
            raise ValueError("snr_lo_db exceeds snr_hi_db")
        object.__setattr__(self, "cnr", cnr)
        object.__setattr__(self, "seed", _check_seed(self.seed))


def clean_probability(policy):
    cnr = policy.cnr
    if cnr == math.inf:
        return 1.0
    return float(Fraction(cnr) / (1 + Fraction(cnr)))


@dataclass(frozen=True)
class AugmentationDecision:
    kind: str
    snr_db: float | None = None

    @property
    def is_clean(self):
        return self.kind == "clean"


def _splitmix64(seed, counters):
    # counter-based form of splitmix64: output k of the stream seeded with `seed`
    z = np.uint64(seed) + (counters.astype(np.uint64) + np.uint64(1)) * _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _uniform(seed, counters):
    return (_splitmix64(seed, counters) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


def sample_decisions(policy, draw_indices):
    """Vectorised sampler: ``(is_clean, snr_db)`` arrays for many draw indices.

    ``snr_db`` is NaN where the draw is clean.
    """
    idx = np.asarray(draw_indices, dtype=np.uint64)
    p = clean_probability(policy)
    u_kind = _uniform(policy.seed, idx * np.uint64(2))
    u_snr = _uniform(policy.seed, idx * np.uint64(2) + np.uint64(1))
    is_clean = u_kind < p
    snr = policy.snr_lo_db + (policy.snr_hi_db - policy.snr_lo_db) * u_snr
    return is_clean, np.where(is_clean, np.nan, snr)


def sample_decision(policy, draw_index):
    if draw_index < 0:
        raise ValueError("draw_index must be non-negative")
    is_clean, snr = sample_decisions(policy, [draw_index])
    if is_clean[0]:
        return AugmentationDecision("clean")
    return AugmentationDecision("noisy", float(snr[0]))


def white_noise(length, sample_rate, seed):
    """i.i.d. standard-normal samples from a PCG64 stream keyed by ``seed``."""
    if length < 1:
        raise ValueError("noise length must be at least 1")
    rng = np.random.Generator(np.random.PCG64(_check_seed(seed)))
    return AudioBuffer(rng.standard_normal(int(length)), sample_rate)


def noise_gain_for_snr(signal_power, noise_power, snr_db):
    """Gain ``g`` such that ``10*log10(Ps / (g**2 * Pn)) == snr_db``."""
    if signal_power <= 0:
        raise SilentSignalError("signal has zero power; SNR is undefined")
    if noise_power <= 0:
        raise SilentSignalError("noise has zero power")
    return math.sqrt(signal_power / (noise_power * 10.0 ** (snr_db / 10.0)))


@dataclass(frozen=True)
class MixMetadata:
    target_snr_db: float
    achieved_snr_db: float
    noise_gain: float
    renorm_gain: float
    clip: ClipReport
    noise_seed: int
    source_id: str | None = None

    def to_sidecar(self):
        return {
            "source_id": self.source_id,
            "target_snr_db": self.target_snr_db,
            "achieved_snr_db": self.achieved_snr_db,
            "noise_seed": self.noise_seed,
            "noise_gain": self.noise_gain,
            "renorm_gain": self.renorm_gain,
            "clipped_sample_count": self.clip.clipped_sample_count,
            "total_sample_count": self.clip.total_sample_count,
        }

    @classmethod
    def from_sidecar(cls, d):
        return cls(
            target_snr_db=d["target_snr_db"],
            achieved_snr_db=d["achieved_snr_db"],
            noise_gain=d["noise_gain"],
            renorm_gain=d["renorm_gain"],
            clip=ClipReport(d["clipped_sample_count"], d["total_sample_count"]),
            noise_seed=d["noise_seed"],
            source_id=d.get("source_id"),
        )


def inject_noise(signal, snr_db, noise_seed, clip_limit=1.0):
    """Add white noise at ``snr_db``, restore the input RMS, then hard-clip.

    The achieved SNR is measured on the separately tracked signal and noise
    components after renormalisation and before clipping.
    """
    signal_power = power(signal)
    if signal_power == 0:
        raise SilentSignalError("cannot inject noise at a fixed SNR into a silent signal")
    noise = white_noise(len(signal), signal.sample_rate, noise_seed).samples
    gain = noise_gain_for_snr(signal_power, float(np.dot(noise, noise) / noise.shape[0]), snr_db)
    noise_part = noise * gain
    mixture = signal.samples + noise_part
    mix_rms = math.sqrt(float(np.dot(mixture, mixture) / mixture.shape[0]))
    if mix_rms == 0:
        raise SilentSignalError("mixture cancelled to silence")
    renorm = rms(signal) / mix_rms

    signal_part = signal.samples * renorm
    noise_part = noise_part * renorm
    achieved = 10.0 * math.log10(float(np.dot(signal_part, signal_part)) / float(np.dot(noise_part, noise_part)))

    out, report = hard_clip(signal.with_samples(mixture * renorm), clip_limit)
    meta = MixMetadata(
        target_snr_db=float(snr_db),
        achieved_snr_db=achieved,
        noise_gain=gain,
        renorm_gain=renorm,
        clip=report,
        noise_seed=int(noise_seed),
    )
    return out, meta


def derive_seed(master_seed, *parts):
    """Stable 64-bit FNV-1a hash of the master seed and string-able parts."""
    h = FNV64_OFFSET
    data = _check_seed(master_seed).to_bytes(8, "little")
    for part in parts:
        text = format_level(part) if isinstance(part, float) else str(part)
        data += b"\x1f" + text.encode("utf-8")
    for byte in data:
        h = ((h ^ byte) * FNV64_PRIME) & UINT64_MASK
    return h


def augmented_filename(record_id, level):
    return f"{record_id}__snr{format_level(level)}.wav"


@dataclass
class CorpusAugmentation:
    mixes: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    def __iter__(self):
        return iter(self.mixes)

    def __len__(self):
        return len(self.mixes)


def _augment_record(record, levels, master_seed, out_dir, encoding, clip_limit):
    signal = read_wav(record.audio_path)
    mixes = []
    for level in levels:
        seed = derive_seed(master_seed, record.id, float(level))
        noisy, meta = inject_noise(signal, level, seed, clip_limit)
        meta = MixMetadata(**{**meta.__dict__, "source_id": record.id})
        wav_path = os.path.join(out_dir, augmented_filename(record.id, level))
        write_wav(noisy, wav_path, encoding)
        with open(wav_path[:-4] + ".json", "w") as fh:
            json.dump(meta.to_sidecar(), fh, indent=2, sort_keys=True)
        mixes.append(meta)
    return mixes


def augment_corpus(manifest, grid, master_seed, out_dir, encoding="float32", clip_limit=1.0, workers=1):
    """Write one noisy WAV plus JSON sidecar per (record, SNR level).

    Per-file noise seeds are hashed from (master_seed, record id, level) so
    outputs do not depend on order or worker count. Unreadable inputs are
    collected in ``errors`` and do not stop the run.
    """
    os.makedirs(out_dir, exist_ok=True)
    probe = os.path.join(out_dir, f".write-probe-{os.getpid()}")
    with open(probe, "wb"):
        pass
    os.remove(probe)
    levels = snr_levels(grid)
    records = list(getattr(manifest, "records", manifest))

    def job(record):
        try:
            return record, _augment_record(record, levels, master_seed, out_dir, encoding, clip_limit), None
        except Exception as exc:  # noqa: BLE001  per-record isolation
            logger.warning("skipping %s: %s", record.id, exc)
            return record, [], f"{type(exc).__name__}: {exc}"

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(job, records))
    else:
        outcomes = [job(r) for r in records]

    result = CorpusAugmentation()
    for record, mixes, error in sorted(outcomes, key=lambda o: o[0].id):
        result.mixes.extend(mixes)
        if error is not None:
            result.errors.append({"source_id": record.id, "error": error})
    return result
