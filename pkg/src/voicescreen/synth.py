"""Synthetic voice-like dataset standing in for hospital recordings.

Both classes are harmonic stacks with additive noise; the positive class
attenuates every partial below a cutoff and adds slow amplitude
modulation. Low-band energy is exactly the structure lossy codecs strip,
so a classifier trained on this data doubles as a tripwire: if any stage
of the pipeline silently compresses audio, class separation collapses and
the accuracy gate fails.

Generation is a pure function of (spec, seed) within this implementation;
byte-level equality across implementations is not promised (PRNGs differ).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .audio import AudioClip, encode_wav
from .model import NEGATIVE, POSITIVE


class IoFailure(Exception):
    pass


@dataclass(frozen=True)
class SyntheticSpec:
    n_per_class: int = 100
    duration: float = 3.0
    sample_rate: int = 16000
    f0: float = 110.0
    harmonics: int = 10
    lowband_cutoff: float = 500.0
    lowband_attenuation_db: float = 30.0
    am_rate: float = 4.0
    am_depth: float = 0.5
    noise_snr_db: float = 20.0
    seed: int = 42


def synth_clip(spec: SyntheticSpec, rng: np.random.Generator, positive: bool) -> AudioClip:
    """One clip: f0 harmonic stack, per-clip random phases, noise at the
    configured SNR; positives lose their low band and gain tremolo."""
    n = int(round(spec.duration * spec.sample_rate))
    t = np.arange(n) / spec.sample_rate
    attenuation = 10.0 ** (-spec.lowband_attenuation_db / 20.0)

    signal = np.zeros(n)
    phases = rng.uniform(0.0, 2.0 * np.pi, spec.harmonics)
    for k in range(1, spec.harmonics + 1):
        freq = k * spec.f0
        amplitude = 1.0 / k
        if positive and freq < spec.lowband_cutoff:
            amplitude *= attenuation
        signal += amplitude * np.sin(2.0 * np.pi * freq * t + phases[k - 1])

    if positive:
        signal *= 1.0 + spec.am_depth * np.sin(2.0 * np.pi * spec.am_rate * t)

    signal_power = float(np.mean(signal**2))
    noise_power = signal_power / 10.0 ** (spec.noise_snr_db / 10.0)
    signal += rng.normal(0.0, np.sqrt(noise_power), n)

    peak = float(np.max(np.abs(signal)))
    samples = np.rint(signal / peak * 0.9 * 32767.0).astype(np.int16)
    return AudioClip(sample_rate=spec.sample_rate, samples=samples)


def generate_synthetic_dataset(
    spec: SyntheticSpec, out_dir: Union[str, Path]
) -> Path:
    """Write 2 x n_per_class WAVs plus manifest.jsonl; deterministic per seed."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        rng = np.random.default_rng(spec.seed)
        lines = []
        for label, positive in ((NEGATIVE, False), (POSITIVE, True)):
            for i in range(spec.n_per_class):
                name = f"{label.lower()}_{i:03d}.wav"
                clip = synth_clip(spec, rng, positive)
                (out_dir / name).write_bytes(encode_wav(clip))
                lines.append(json.dumps({"path": name, "label": label}, sort_keys=True))
        manifest = out_dir / "manifest.jsonl"
        manifest.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write dataset to {out_dir}: {exc}") from exc
    return manifest
