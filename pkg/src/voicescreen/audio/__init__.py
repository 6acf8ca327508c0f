"""Raw PCM audio: WAV codec, preprocessing, and MFCC feature extraction."""

from .wav import (
    SUPPORTED_RATES,
    AudioClip,
    AudioError,
    NotWav,
    TruncatedData,
    UnsupportedCodec,
    UnsupportedDepth,
    UnsupportedRate,
    decode_wav,
    encode_wav,
    resample,
    trim_silence,
)
from .features import (
    ClipTooShort,
    EmptyMatrix,
    FeatureConfig,
    FeatureMatrix,
    FeatureVector,
    mel_filterbank,
    mel_spectrogram,
    mfcc,
    summarize,
)

__all__ = [
    "SUPPORTED_RATES",
    "AudioClip",
    "AudioError",
    "NotWav",
    "TruncatedData",
    "UnsupportedCodec",
    "UnsupportedDepth",
    "UnsupportedRate",
    "decode_wav",
    "encode_wav",
    "resample",
    "trim_silence",
    "ClipTooShort",
    "EmptyMatrix",
    "FeatureConfig",
    "FeatureMatrix",
    "FeatureVector",
    "mel_filterbank",
    "mel_spectrogram",
    "mfcc",
    "summarize",
]
