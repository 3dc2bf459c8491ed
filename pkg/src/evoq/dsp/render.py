"""Stimulus rendering: EQ filtering, optional headphone compensation, and
loudness alignment, in that order."""

from __future__ import annotations

from ..de import Curve
from .audio import AudioClip
from .filters import BandPlan, FirFilter, DEFAULT_TAP_COUNT, apply_fir, design_eq_filter
from .loudness import align_loudness

DEFAULT_TARGET_LUFS = -18.0


def render_stimulus(
    track: AudioClip,
    curve: Curve,
    plan: BandPlan,
    tap_count: int = DEFAULT_TAP_COUNT,
    compensation: FirFilter | None = None,
    target_lufs: float = DEFAULT_TARGET_LUFS,
) -> AudioClip:
    """Render one listening stimulus from a track excerpt and a gain curve."""
    fir = design_eq_filter(curve, plan, track.sample_rate, tap_count)
    out = apply_fir(track, fir)
    if compensation is not None:
        out = apply_fir(out, compensation)
    aligned, _ = align_loudness(out, target_lufs)
    return aligned
