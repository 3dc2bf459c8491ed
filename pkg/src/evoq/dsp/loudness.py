"""Integrated loudness measurement and alignment per ITU-R BS.1770-3.

Pipeline: two-stage K-weighting pre-filter, 400 ms blocks with 75 %
overlap, -70 LKFS absolute gate followed by a -10 LU relative gate, and
channel-weighted mean-square summation. At 48 kHz the recommendation's
published biquad coefficients are used verbatim; other rates redesign the
analog prototypes via the bilinear transform.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from scipy.signal import lfilter

from .audio import AudioClip

#: Sentinel returned when every gating block falls below the absolute gate.
BELOW_GATE = float("-inf")

_OFFSET_LKFS = -0.691
_ABS_GATE_LKFS = -70.0
_REL_GATE_LU = 10.0
_BLOCK_S = 0.400
_HOP_S = 0.100  # 75 % overlap

# Published 48 kHz coefficients (shelving stage, then RLB high-pass).
_K_WEIGHT_48K = (
    ([1.53512485958697, -2.69169618940638, 1.19839281085285],
     [1.0, -1.69065929318241, 0.73248077421585]),
    ([1.0, -2.0, 1.0],
     [1.0, -1.99004745483398, 0.99007225036621]),
)

# Analog prototype parameters behind the published table.
_SHELF_F0, _SHELF_GAIN_DB, _SHELF_Q = 1681.9744509555319, 3.99984385397, 0.7071752369554193
_HIGHPASS_F0, _HIGHPASS_Q = 38.13547087613982, 0.5003270373253953


def k_weighting_coefficients(sample_rate: int) -> tuple:
    """(b, a) pairs of the two K-weighting stages for the given rate."""
    if sample_rate == 48000:
        return _K_WEIGHT_48K

    k = math.tan(math.pi * _SHELF_F0 / sample_rate)
    vh = 10.0 ** (_SHELF_GAIN_DB / 20.0)
    vb = vh ** 0.499666774155
    a0 = 1.0 + k / _SHELF_Q + k * k
    shelf = (
        [(vh + vb * k / _SHELF_Q + k * k) / a0,
         2.0 * (k * k - vh) / a0,
         (vh - vb * k / _SHELF_Q + k * k) / a0],
        [1.0, 2.0 * (k * k - 1.0) / a0, (1.0 - k / _SHELF_Q + k * k) / a0],
    )
    k = math.tan(math.pi * _HIGHPASS_F0 / sample_rate)
    a0 = 1.0 + k / _HIGHPASS_Q + k * k
    highpass = (
        [1.0, -2.0, 1.0],
        [1.0, 2.0 * (k * k - 1.0) / a0, (1.0 - k / _HIGHPASS_Q + k * k) / a0],
    )
    return shelf, highpass


def _block_powers(clip: AudioClip) -> np.ndarray:
    """Per-block, per-channel mean square of the K-weighted signal."""
    y = clip.samples
    for b, a in k_weighting_coefficients(clip.sample_rate):
        y = lfilter(b, a, y, axis=0)
    block = int(round(_BLOCK_S * clip.sample_rate))
    hop = int(round(_HOP_S * clip.sample_rate))
    n_blocks = (len(clip) - block) // hop + 1
    cum = np.concatenate([np.zeros((1, clip.channels)), np.cumsum(y * y, axis=0)])
    starts = np.arange(n_blocks) * hop
    return (cum[starts + block] - cum[starts]) / block


def measure_loudness(clip: AudioClip) -> float:
    """Integrated loudness in LKFS/LUFS, or ``BELOW_GATE`` for gated-out input."""
    block = int(round(_BLOCK_S * clip.sample_rate))
    if len(clip) < block:
        raise ValueError(
            f"clip of {len(clip)} samples is shorter than one 400 ms gating block "
            f"({block} samples at {clip.sample_rate} Hz)"
        )
    z = _block_powers(clip)  # (blocks, channels); channel weights are 1.0
    with np.errstate(divide="ignore"):
        l_blocks = _OFFSET_LKFS + 10.0 * np.log10(z.sum(axis=1))
    kept = z[l_blocks > _ABS_GATE_LKFS]
    if kept.size == 0:
        return BELOW_GATE
    rel_threshold = (
        _OFFSET_LKFS + 10.0 * math.log10(kept.mean(axis=0).sum()) - _REL_GATE_LU
    )
    kept = z[(l_blocks > _ABS_GATE_LKFS) & (l_blocks > rel_threshold)]
    if kept.size == 0:
        return BELOW_GATE
    return _OFFSET_LKFS + 10.0 * math.log10(kept.mean(axis=0).sum())


def align_loudness(
    clip: AudioClip, target_lufs: float, tolerance_lu: float = 0.05, max_rounds: int = 4
) -> tuple[AudioClip, float]:
    """Apply one broadband gain so the clip measures at the target loudness.

    Gating can shift once gain is applied, so the gain is refined by
    re-measurement until the result is within ``tolerance_lu``. Returns the
    aligned clip and the applied gain in dB; warns when the gain pushes
    samples beyond full scale.
    """
    measured = measure_loudness(clip)
    if not math.isfinite(measured):
        raise ValueError("clip is unmeasurable: all gating blocks below the absolute gate")
    gain_db = target_lufs - measured
    aligned = clip.scaled(gain_db)
    for _ in range(max_rounds):
        measured = measure_loudness(aligned)
        if abs(measured - target_lufs) <= tolerance_lu:
            break
        gain_db += target_lufs - measured
        aligned = clip.scaled(gain_db)
    if aligned.peak() > 1.0:
        warnings.warn(
            f"loudness alignment gain of {gain_db:+.2f} dB pushes peak to "
            f"{aligned.peak():.3f} FS",
            stacklevel=2,
        )
    return aligned, float(gain_db)
