"""Audio pipeline: WAV I/O, FIR equalization, loudness measurement and
alignment, and stimulus rendering."""

from .audio import AudioClip, SUPPORTED_RATES
from .filters import (
    BandPlan,
    DEFAULT_OCTAVE_CENTERS,
    DEFAULT_TAP_COUNT,
    FirFilter,
    apply_fir,
    design_eq_filter,
    load_filter_file,
    minimum_tap_count,
)
from .loudness import BELOW_GATE, align_loudness, k_weighting_coefficients, measure_loudness
from .render import DEFAULT_TARGET_LUFS, render_stimulus
from .wav import ENCODINGS, read_wav, read_wav_bytes, wav_bytes, write_wav

__all__ = [
    "AudioClip",
    "SUPPORTED_RATES",
    "BandPlan",
    "DEFAULT_OCTAVE_CENTERS",
    "DEFAULT_TAP_COUNT",
    "DEFAULT_TARGET_LUFS",
    "ENCODINGS",
    "FirFilter",
    "BELOW_GATE",
    "apply_fir",
    "align_loudness",
    "design_eq_filter",
    "k_weighting_coefficients",
    "load_filter_file",
    "measure_loudness",
    "minimum_tap_count",
    "read_wav",
    "read_wav_bytes",
    "render_stimulus",
    "wav_bytes",
    "write_wav",
]
