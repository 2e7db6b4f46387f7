"""Mono audio container, WAV I/O and the power/gain/clip primitives."""

import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    AudioDomainError,
    AudioTooLargeError,
    UnsupportedCodecError,
    WavFormatError,
)

FORMAT_PCM = 1
FORMAT_IEEE_FLOAT = 3
FORMAT_EXTENSIBLE = 0xFFFE

ENCODINGS = ("pcm16", "float32")


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    """Single-channel audio.

    ``samples`` is stored as a read-only float64 array regardless of the
    dtype passed in, so buffers can be shared between workers safely.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64, copy=True)
        if samples.ndim != 1:
            raise AudioDomainError(f"expected mono samples, got shape {samples.shape}")
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise AudioDomainError(f"sample_rate must be a positive integer, got {self.sample_rate!r}")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.shape[0]

    def __eq__(self, other):
        if not isinstance(other, AudioBuffer):
            return NotImplemented
        return self.sample_rate == other.sample_rate and np.array_equal(self.samples, other.samples)

    @property
    def duration(self):
        return len(self) / self.sample_rate

    def with_samples(self, samples):
        return AudioBuffer(samples, self.sample_rate)


@dataclass(frozen=True)
class ClipReport:
    clipped_sample_count: int
    total_sample_count: int

    @property
    def fraction(self):
        return self.clipped_sample_count / self.total_sample_count


def _require_nonempty(buffer):
    if len(buffer) == 0:
        raise AudioDomainError("power/RMS of an empty buffer is undefined")


def power(buffer):
    """Mean-square amplitude, accumulated in float64."""
    _require_nonempty(buffer)
    x = buffer.samples
    return float(np.dot(x, x) / x.shape[0])


def rms(buffer):
    return float(np.sqrt(power(buffer)))


def scale(buffer, gain):
    gain = float(gain)
    if not np.isfinite(gain):
        raise AudioDomainError(f"gain must be finite, got {gain}")
    return buffer.with_samples(buffer.samples * gain)


def hard_clip(buffer, limit=1.0):
    """Saturate samples to ``[-limit, limit]``.

    Returns the clipped buffer and a ClipReport counting samples whose
    magnitude exceeded ``limit``. In-range samples are left untouched.
    """
    limit = float(limit)
    if not limit > 0:
        raise AudioDomainError(f"clip limit must be positive, got {limit}")
    x = buffer.samples
    over = np.abs(x) > limit
    count = int(np.count_nonzero(over))
    out = np.clip(x, -limit, limit) if count else x
    return buffer.with_samples(out), ClipReport(count, len(x))


# --- WAV -------------------------------------------------------------------


def _available_memory():
    try:
        return os.sysconf("SC_AVPHYS_PAGES") * os.sysconf("SC_PAGE_SIZE")
    except (ValueError, OSError, AttributeError):
        return None


def _iter_chunks(data):
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body_start = pos + 8
        yield chunk_id, body_start, size
        pos = body_start + size + (size & 1)


def _parse_fmt(body):
    if len(body) < 16:
        raise WavFormatError("fmt", f"expected at least 16 bytes, got {len(body)}")
    tag, channels, rate, _byte_rate, block_align, bits = struct.unpack_from("<HHIIHH", body, 0)
    if tag == FORMAT_EXTENSIBLE:
        if len(body) < 40:
            raise WavFormatError("fmt", "truncated WAVE_FORMAT_EXTENSIBLE block")
        (tag,) = struct.unpack_from("<H", body, 24)
    if channels < 1:
        raise WavFormatError("fmt", "channel count is zero")
    if rate == 0:
        raise WavFormatError("fmt", "sample rate is zero")
    if (tag, bits) == (FORMAT_PCM, 16):
        dtype = np.dtype("<i2")
    elif (tag, bits) == (FORMAT_IEEE_FLOAT, 32):
        dtype = np.dtype("<f4")
    else:
        raise UnsupportedCodecError(
            f"unsupported WAV encoding: format tag {tag}, {bits} bits "
            "(only PCM16 and IEEE float32 are supported)")
    if block_align != channels * dtype.itemsize:
        raise WavFormatError("fmt", f"block_align {block_align} inconsistent with {channels}ch/{bits}bit")
    return dtype, channels, rate


def read_wav(path):
    """Decode a PCM16 or float32 WAV file into a mono AudioBuffer.

    Multichannel audio is downmixed by the per-frame arithmetic mean.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavFormatError("RIFF", "not a RIFF/WAVE file")

    fmt = None
    payload = None
    for chunk_id, start, size in _iter_chunks(data):
        if chunk_id == b"fmt ":
            if start + size > len(data):
                raise WavFormatError("fmt", "chunk extends past end of file")
            fmt = _parse_fmt(data[start:start + size])
        elif chunk_id == b"data":
            if fmt is None:
                raise WavFormatError("data", "data chunk precedes fmt chunk")
            if start + size > len(data):
                raise WavFormatError("data", f"declared {size} bytes but only {len(data) - start} present")
            payload = (start, size)
            break
    if fmt is None:
        raise WavFormatError("fmt", "missing")
    if payload is None:
        raise WavFormatError("data", "missing")

    dtype, channels, rate = fmt
    start, size = payload
    frame_bytes = dtype.itemsize * channels
    if size % frame_bytes:
        raise WavFormatError("data", f"size {size} is not a multiple of the {frame_bytes}-byte frame")
    needed = (size // dtype.itemsize) * 8
    available = _available_memory()
    if available is not None and needed > available:
        raise AudioTooLargeError(f"{path}: decoding needs {needed} bytes, {available} available")

    raw = np.frombuffer(data, dtype=dtype, count=size // dtype.itemsize, offset=start)
    frames = raw.reshape(-1, channels).astype(np.float64)
    if dtype.kind == "i":
        frames /= 32768.0
    mono = frames[:, 0] if channels == 1 else frames.mean(axis=1)
    return AudioBuffer(mono, rate)


def write_wav(buffer, path, encoding="float32"):
    if encoding not in ENCODINGS:
        raise ValueError(f"encoding must be one of {ENCODINGS}, got {encoding!r}")
    x = buffer.samples
    if not np.all(np.isfinite(x)):
        raise AudioDomainError("cannot write non-finite samples")
    if encoding == "pcm16":
        body = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2").tobytes()
        tag, bits = FORMAT_PCM, 16
    else:
        body = x.astype("<f4").tobytes()
        tag, bits = FORMAT_IEEE_FLOAT, 32
    block_align = bits // 8
    fmt = struct.pack("<HHIIHH", tag, 1, buffer.sample_rate,
                      buffer.sample_rate * block_align, block_align, bits)
    chunks = b"fmt " + struct.pack("<I", len(fmt)) + fmt
    chunks += b"data" + struct.pack("<I", len(body)) + body
    if len(body) & 1:
        chunks += b"\x00"
    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", 4 + len(chunks)) + b"WAVE" + chunks)
