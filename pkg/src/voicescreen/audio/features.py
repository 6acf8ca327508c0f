"""MFCC feature extraction for the classifier front end.

The chain is: pre-emphasis -> Hann-windowed frames -> magnitude-squared
DFT -> triangular mel filterbank (HTK scale) -> natural log with a floor
-> orthonormal DCT-II -> per-coefficient mean/std summary. Every stage is
a pure function of its inputs, so equal clips always produce bit-identical
features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft

from .wav import AudioClip, AudioError


class ClipTooShort(AudioError):
    """Clip shorter than one analysis frame."""


class EmptyMatrix(AudioError):
    """Feature matrix with no frames cannot be summarized."""


@dataclass(frozen=True)
class FeatureConfig:
    """Knobs of the feature pipeline.

    Durations are seconds; internal_rate is the canonical sample rate all
    audio is resampled to before analysis.
    """

    frame_length: float = 0.025
    hop_length: float = 0.010
    mel_filters: int = 26
    num_coefficients: int = 13
    pre_emphasis: float = 0.97
    log_floor: float = 1e-10
    internal_rate: int = 16000

    def __post_init__(self) -> None:
        if self.num_coefficients > self.mel_filters:
            raise ValueError("num_coefficients must not exceed mel_filters")
        if self.hop_length > self.frame_length:
            raise ValueError("hop_length must not exceed frame_length")
        if self.frame_length <= 0 or self.hop_length <= 0:
            raise ValueError("frame and hop lengths must be positive")
        if not 0.0 <= self.pre_emphasis < 1.0:
            raise ValueError("pre_emphasis must be in [0, 1)")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")
        if self.mel_filters < 1 or self.num_coefficients < 1:
            raise ValueError("filter and coefficient counts must be positive")

    @property
    def frame_samples(self) -> int:
        return int(round(self.frame_length * self.internal_rate))

    @property
    def hop_samples(self) -> int:
        return int(round(self.hop_length * self.internal_rate))


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """frames x coefficients matrix of finite reals."""

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError("feature matrix must be 2-D")
        if not np.all(np.isfinite(arr)):
            raise ValueError("feature matrix contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureMatrix):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def coefficients_per_frame(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Fixed-length clip summary: per-coefficient means then stds."""

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError("feature vector must be 1-D")
        if not np.all(np.isfinite(arr)):
            raise ValueError("feature vector contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __len__(self) -> int:
        return len(self.values)


def hz_to_mel(hz: float) -> float:
    """HTK mel scale: m = 2595 * log10(1 + f/700)."""
    return 2595.0 * np.log10(1.0 + hz / 700.0)


def mel_to_hz(mel: float) -> float:
    return 700.0 * (10.0 ** (mel / 2595.0) - 1.0)


def mel_filter_centers(n_filters: int, sample_rate: int) -> np.ndarray:
    """Center frequencies (Hz) of the triangular filters, 0..Nyquist."""
    mels = np.linspace(hz_to_mel(0.0), hz_to_mel(sample_rate / 2.0), n_filters + 2)
    return mel_to_hz(mels)[1:-1]


def mel_filterbank(n_filters: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """Triangular mel filterbank sampled at the DFT bin frequencies.

    Returns an (n_filters, n_fft//2 + 1) weight matrix. Filter m rises
    linearly from edge m-1 to its center and falls to edge m+1, with the
    edges evenly spaced on the HTK mel scale between 0 Hz and Nyquist.
    """
    mels = np.linspace(hz_to_mel(0.0), hz_to_mel(sample_rate / 2.0), n_filters + 2)
    edges = mel_to_hz(mels)
    bin_freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft

    weights = np.zeros((n_filters, len(bin_freqs)))
    for m in range(n_filters):
        left, center, right = edges[m], edges[m + 1], edges[m + 2]
        up = (bin_freqs - left) / (center - left)
        down = (right - bin_freqs) / (right - center)
        weights[m] = np.maximum(0.0, np.minimum(up, down))
    return weights


def frame_count(n_samples: int, frame_samples: int, hop_samples: int) -> int:
    """Number of full analysis frames: floor((N - frame)/hop) + 1."""
    return (n_samples - frame_samples) // hop_samples + 1


def mel_spectrogram(clip: AudioClip, config: FeatureConfig = FeatureConfig()) -> FeatureMatrix:
    """Log-energy mel spectrogram, one row per frame, mel_filters wide."""
    if clip.sample_rate != config.internal_rate:
        raise ValueError(
            f"clip is at {clip.sample_rate} Hz, expected internal rate "
            f"{config.internal_rate}; resample first"
        )
    frame = config.frame_samples
    hop = config.hop_samples
    x = clip.samples.astype(np.float64)
    if len(x) < frame:
        raise ClipTooShort(f"{len(x)} samples, need at least {frame}")

    if config.pre_emphasis > 0.0:
        x = np.concatenate(([x[0]], x[1:] - config.pre_emphasis * x[:-1]))

    n_frames = frame_count(len(x), frame, hop)
    window = np.hanning(frame)
    filters = mel_filterbank(config.mel_filters, frame, config.internal_rate)

    out = np.empty((n_frames, config.mel_filters))
    for i in range(n_frames):
        segment = x[i * hop : i * hop + frame] * window
        power = np.abs(np.fft.rfft(segment)) ** 2
        out[i] = np.log(np.maximum(filters @ power, config.log_floor))
    return FeatureMatrix(values=out)


def mfcc(clip: AudioClip, config: FeatureConfig = FeatureConfig()) -> FeatureMatrix:
    """Mel-frequency cepstral coefficients per frame.

    Orthonormal DCT-II decorrelates each log-mel frame; the first
    num_coefficients coefficients are kept.
    """
    mel = mel_spectrogram(clip, config)
    coeffs = scipy.fft.dct(mel.values, type=2, norm="ortho", axis=1)
    return FeatureMatrix(values=coeffs[:, : config.num_coefficients])


def summarize(features: FeatureMatrix) -> FeatureVector:
    """Concatenate per-coefficient mean and population standard deviation."""
    if features.frames < 1:
        raise EmptyMatrix("cannot summarize a matrix with no frames")
    means = features.values.mean(axis=0)
    stds = features.values.std(axis=0)
    return FeatureVector(values=np.concatenate([means, stds]))
