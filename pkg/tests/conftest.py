import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from voicescreen.audio import AudioClip, SUPPORTED_RATES


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(num, title): acceptance criterion pass/fail reporting"
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when != "call":
        return
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    num, title = marker.args
    status = "PASS" if rep.passed else "FAIL"
    reporter = item.config.pluginmanager.get_plugin("terminalreporter")
    if reporter is not None:
        reporter.write_line(f"[ACCEPTANCE] criterion {num:>2} {status} - {title}")


def random_clip(rng: np.random.Generator, max_samples: int = 4000) -> AudioClip:
    rate = int(rng.choice(SUPPORTED_RATES))
    n = int(rng.integers(1, max_samples + 1))
    samples = rng.integers(-32768, 32768, size=n, dtype=np.int64).astype(np.int16)
    return AudioClip(sample_rate=rate, samples=samples)


def sine_clip(rate: int, freq: float, duration: float, amplitude: float = 0.8) -> AudioClip:
    t = np.arange(int(round(duration * rate))) / rate
    samples = np.rint(amplitude * 32767.0 * np.sin(2 * np.pi * freq * t)).astype(np.int16)
    return AudioClip(sample_rate=rate, samples=samples)


def silence_clip(rate: int = 16000, duration: float = 0.5) -> AudioClip:
    return AudioClip(rate, np.zeros(int(round(duration * rate)), dtype=np.int16))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0xC0FFEE)
