"""WAV-PCM decoding/encoding and basic clip preprocessing.

Only RIFF/WAVE containers holding 16-bit signed little-endian PCM are
accepted. Lossy codecs destroy the low-amplitude spectral content the
classifier depends on, so anything that is not raw PCM is rejected
outright instead of being transcoded.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

SUPPORTED_RATES = (8000, 16000, 22050, 44100, 48000)

_PCM_FORMAT_TAG = 1
_FULL_SCALE = 32768.0


class AudioError(Exception):
    """Base class for audio decode/processing failures."""


class NotWav(AudioError):
    """Input is not a parseable RIFF/WAVE container."""


class UnsupportedCodec(AudioError):
    """Format tag is not plain PCM (compressed/lossy codecs are rejected)."""


class UnsupportedDepth(AudioError):
    """Bits-per-sample is not 16."""


class TruncatedData(AudioError):
    """Data chunk is shorter than declared, or carries no samples."""


class UnsupportedRate(AudioError):
    """Sample rate outside the supported set."""


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Decoded mono PCM audio.

    samples is a 1-D int16 array; every value fits in [-32768, 32767] by
    construction. Instances are immutable and safe to share across threads.
    """

    sample_rate: int
    samples: np.ndarray
    channels: int = 1

    def __post_init__(self) -> None:
        if self.sample_rate not in SUPPORTED_RATES:
            raise UnsupportedRate(f"unsupported sample rate {self.sample_rate}")
        arr = np.asarray(self.samples)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("samples must be a nonempty 1-D array")
        if arr.dtype != np.int16:
            if np.any(arr < -32768) or np.any(arr > 32767):
                raise ValueError("sample values outside int16 range")
            arr = arr.astype(np.int16)
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        if self.channels != 1:
            raise ValueError("clips are mono after decoding")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AudioClip):
            return NotImplemented
        return (
            self.sample_rate == other.sample_rate
            and self.channels == other.channels
            and np.array_equal(self.samples, other.samples)
        )

    @property
    def duration(self) -> float:
        """Clip length in seconds."""
        return len(self.samples) / self.sample_rate


def decode_wav(data: bytes) -> AudioClip:
    """Decode a RIFF/WAVE byte string into a mono AudioClip.

    Stereo (or higher channel count) input is downmixed by per-sample
    integer average. Raises NotWav, UnsupportedCodec, UnsupportedDepth,
    TruncatedData, or UnsupportedRate.
    """
    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise NotWav("missing RIFF/WAVE magic")

    fmt = None
    pcm_bytes = None
    offset = 12
    while offset + 8 <= len(data):
        chunk_id = data[offset : offset + 4]
        (chunk_size,) = struct.unpack_from("<I", data, offset + 4)
        body_start = offset + 8
        if chunk_id == b"fmt ":
            if chunk_size < 16 or body_start + 16 > len(data):
                raise NotWav("fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", data, body_start)
        elif chunk_id == b"data":
            if fmt is None:
                raise NotWav("data chunk before fmt chunk")
            available = len(data) - body_start
            if available < chunk_size:
                raise TruncatedData(
                    f"data chunk declares {chunk_size} bytes, {available} present"
                )
            pcm_bytes = data[body_start : body_start + chunk_size]
            break
        # skip unknown chunks; chunk bodies are word-aligned
        offset = body_start + chunk_size + (chunk_size & 1)

    if fmt is None:
        raise NotWav("missing fmt chunk")
    if pcm_bytes is None:
        raise NotWav("missing data chunk")

    format_tag, channels, sample_rate, _byte_rate, _block_align, bits = fmt
    if format_tag != _PCM_FORMAT_TAG:
        raise UnsupportedCodec(
            f"format tag 0x{format_tag:04x} is not raw PCM; lossy or "
            "compressed audio is rejected"
        )
    if bits != 16:
        raise UnsupportedDepth(f"{bits} bits per sample, expected 16")
    if channels < 1:
        raise NotWav("fmt chunk declares zero channels")
    if sample_rate not in SUPPORTED_RATES:
        raise UnsupportedRate(f"unsupported sample rate {sample_rate}")

    frame_bytes = 2 * channels
    if len(pcm_bytes) == 0:
        raise TruncatedData("data chunk is empty")
    if len(pcm_bytes) % frame_bytes != 0:
        raise TruncatedData("data chunk ends mid sample frame")

    samples = np.frombuffer(pcm_bytes, dtype="<i2")
    if channels > 1:
        frames = samples.reshape(-1, channels).astype(np.int32)
        samples = (frames.sum(axis=1) // channels).astype(np.int16)
    return AudioClip(sample_rate=sample_rate, samples=samples)


def encode_wav(clip: AudioClip) -> bytes:
    """Encode a clip as a canonical 44-byte-header PCM16 mono WAV.

    Output is byte-identical for equal inputs; decode_wav inverts it
    exactly.
    """
    data = clip.samples.astype("<i2").tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(data),
        b"WAVE",
        b"fmt ",
        16,
        _PCM_FORMAT_TAG,
        1,
        clip.sample_rate,
        clip.sample_rate * 2,
        2,
        16,
        b"data",
        len(data),
    )
    return header + data


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Linear-interpolation resampling to target_rate.

    Output length is round(n * target/source). Resampling at the source
    rate returns the clip unchanged.
    """
    if target_rate not in SUPPORTED_RATES:
        raise UnsupportedRate(f"unsupported target rate {target_rate}")
    if target_rate == clip.sample_rate:
        return clip

    n_in = len(clip.samples)
    n_out = max(1, int(round(n_in * target_rate / clip.sample_rate)))
    positions = np.arange(n_out, dtype=np.float64) * (clip.sample_rate / target_rate)
    values = np.interp(positions, np.arange(n_in), clip.samples.astype(np.float64))
    out = np.clip(np.rint(values), -32768, 32767).astype(np.int16)
    return AudioClip(sample_rate=target_rate, samples=out)


def trim_silence(clip: AudioClip, threshold_db: float = -40.0, window: float = 0.01) -> AudioClip:
    """Drop leading/trailing windows whose RMS falls below threshold_db.

    threshold_db is relative to full scale (dBFS) and must be negative;
    window is the analysis window in seconds. Interior audio is never
    removed, and a clip that is silent throughout is returned unchanged.
    """
    if threshold_db >= 0:
        raise ValueError("threshold_db must be negative (dBFS)")
    if window <= 0:
        raise ValueError("window must be positive")

    win = max(1, int(round(window * clip.sample_rate)))
    x = clip.samples.astype(np.float64)
    n = len(x)
    loud = []
    for start in range(0, n, win):
        chunk = x[start : start + win]
        rms = math.sqrt(float(np.mean(chunk * chunk)))
        db = 20.0 * math.log10(rms / _FULL_SCALE) if rms > 0 else -math.inf
        loud.append(db >= threshold_db)

    if not any(loud):
        return clip
    first = loud.index(True)
    last = len(loud) - 1 - loud[::-1].index(True)
    lo = first * win
    hi = min(n, (last + 1) * win)
    if lo == 0 and hi == n:
        return clip
    return AudioClip(sample_rate=clip.sample_rate, samples=clip.samples[lo:hi])
