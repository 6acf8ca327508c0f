"""Independent brute-force reference implementations used by the tests.

Everything here is written with plain Python loops and the math module so
that it shares no code path with the library: direct O(N^2) DFT summation,
direct DCT summation, and a from-first-principles mel filterbank. Slow on
purpose; only run on small inputs.
"""

from __future__ import annotations

import math


def naive_dft_power(samples: list[float]) -> list[float]:
    """Magnitude-squared DFT by direct summation, bins 0..N//2."""
    n = len(samples)
    out = []
    for k in range(n // 2 + 1):
        re = 0.0
        im = 0.0
        for t, x in enumerate(samples):
            angle = -2.0 * math.pi * k * t / n
            re += x * math.cos(angle)
            im += x * math.sin(angle)
        out.append(re * re + im * im)
    return out


def naive_dct2_ortho(values: list[float], n_keep: int) -> list[float]:
    """Orthonormal DCT-II by direct summation, first n_keep coefficients."""
    m = len(values)
    out = []
    for k in range(n_keep):
        acc = 0.0
        for n, x in enumerate(values):
            acc += x * math.cos(math.pi * k * (2 * n + 1) / (2 * m))
        scale = math.sqrt(1.0 / m) if k == 0 else math.sqrt(2.0 / m)
        out.append(scale * acc)
    return out


def naive_hann(n: int) -> list[float]:
    if n == 1:
        return [1.0]
    return [0.5 - 0.5 * math.cos(2.0 * math.pi * i / (n - 1)) for i in range(n)]


def naive_mel_edges(n_filters: int, sample_rate: int) -> list[float]:
    """Filter edge frequencies, evenly spaced on the HTK mel scale."""
    lo = 0.0
    hi = 2595.0 * math.log10(1.0 + (sample_rate / 2.0) / 700.0)
    edges = []
    for i in range(n_filters + 2):
        mel = lo + (hi - lo) * i / (n_filters + 1)
        edges.append(700.0 * (10.0 ** (mel / 2595.0) - 1.0))
    return edges


def naive_mel_weights(n_filters: int, n_fft: int, sample_rate: int) -> list[list[float]]:
    edges = naive_mel_edges(n_filters, sample_rate)
    n_bins = n_fft // 2 + 1
    weights = []
    for m in range(n_filters):
        left, center, right = edges[m], edges[m + 1], edges[m + 2]
        row = []
        for b in range(n_bins):
            f = b * sample_rate / n_fft
            up = (f - left) / (center - left)
            down = (right - f) / (right - center)
            row.append(max(0.0, min(up, down)))
        weights.append(row)
    return weights


def naive_mfcc(
    samples: list[int],
    sample_rate: int,
    frame_samples: int,
    hop_samples: int,
    n_filters: int,
    n_coefficients: int,
    pre_emphasis: float,
    log_floor: float,
) -> list[list[float]]:
    """Full MFCC pipeline with direct-summation DFT and DCT."""
    x = [float(s) for s in samples]
    if pre_emphasis > 0.0:
        x = [x[0]] + [x[i] - pre_emphasis * x[i - 1] for i in range(1, len(x))]

    window = naive_hann(frame_samples)
    weights = naive_mel_weights(n_filters, frame_samples, sample_rate)
    n_frames = (len(x) - frame_samples) // hop_samples + 1

    frames = []
    for i in range(n_frames):
        seg = [x[i * hop_samples + j] * window[j] for j in range(frame_samples)]
        power = naive_dft_power(seg)
        mel = []
        for row in weights:
            acc = 0.0
            for w, p in zip(row, power):
                acc += w * p
            mel.append(math.log(max(acc, log_floor)))
        frames.append(naive_dct2_ortho(mel, n_coefficients))
    return frames


def two_pass_mean_std(columns: list[list[float]]) -> tuple[list[float], list[float]]:
    """Classic two-pass mean then population std, per column of a matrix."""
    n_rows = len(columns)
    n_cols = len(columns[0])
    means = []
    stds = []
    for c in range(n_cols):
        col = [columns[r][c] for r in range(n_rows)]
        mean = sum(col) / n_rows
        var = sum((v - mean) ** 2 for v in col) / n_rows
        means.append(mean)
        stds.append(math.sqrt(var))
    return means, stds
