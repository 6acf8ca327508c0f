"""The canonical WAV-to-features path shared by training and serving.

Training and inference must disagree on nothing here: both call
features_from_wav, so a model always receives vectors produced exactly the
way its training data was.
"""

from __future__ import annotations

from . import audio


def features_from_wav(wav_bytes: bytes, config: audio.FeatureConfig) -> audio.FeatureVector:
    """decode -> resample to the internal rate -> mfcc -> summary vector."""
    clip = audio.decode_wav(wav_bytes)
    clip = audio.resample(clip, config.internal_rate)
    return audio.summarize(audio.mfcc(clip, config))
