"""Linear-phase FIR realization of per-band gain curves.

Design method: frequency sampling. The requested (center, gain) pairs are
interpolated by a monotone cubic in (log2 f, dB) space, held flat below the
lowest and above the highest center, sampled on a dense grid, and brought
to the tap budget by inverse DFT plus a Hann window. Windowing smears the
response by the window's frequency kernel, which pulls the narrow
low-frequency bands toward their neighbors. Two measures counter that:
the sampled target is first pre-smoothed with that same kernel, so the
base design only asks for what the tap budget can realize (and, because
smoothing is linear in dB, opposite curves stay exact mirror images and
their cascade cancels); then refinement passes measure the response at the
band centers and the geometric midpoints between them and nudge an
additive correction curve until the centers land on the requested gains
exactly and the midpoints on the smoothed target. Below the lowest center
the correction fades out over one kernel width so the response returns to
the flat edge-gain extension instead of carrying the lowest band's
correction down to DC.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.signal import fftconvolve

from ..de import Curve
from .audio import AudioClip
from . import wav

#: One-octave centers spanning 31 Hz to 16 kHz.
DEFAULT_OCTAVE_CENTERS = (
    31.25, 62.5, 125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0, 16000.0,
)

DEFAULT_TAP_COUNT = 4095
DESIGN_TOLERANCE_DB = 0.5
_REFINE_PASSES = 16
_CORRECTION_CAP_DB = 12.0


@dataclass(frozen=True)
class BandPlan:
    """Band-center layout of the equalizer."""

    center_frequencies: tuple[float, ...] = DEFAULT_OCTAVE_CENTERS

    def __post_init__(self):
        f = tuple(float(x) for x in self.center_frequencies)
        if len(f) < 2:
            raise ValueError("band plan needs at least two centers")
        if f[0] <= 0 or any(b <= a for a, b in zip(f, f[1:])):
            raise ValueError("band centers must be positive and strictly increasing")
        object.__setattr__(self, "center_frequencies", f)

    def __len__(self) -> int:
        return len(self.center_frequencies)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.center_frequencies)


@dataclass(frozen=True)
class FirFilter:
    """FIR coefficients tied to the sample rate they were designed for."""

    taps: np.ndarray
    sample_rate: int

    def __post_init__(self):
        t = np.asarray(self.taps, dtype=float)
        if t.ndim != 1 or t.size == 0:
            raise ValueError("taps must be a non-empty 1-D vector")
        if not np.all(np.isfinite(t)):
            raise ValueError("taps must be finite")
        if t.size % 2 == 0:
            raise ValueError(f"tap count must be odd for linear phase, got {t.size}")
        t = t.copy()
        t.setflags(write=False)
        object.__setattr__(self, "taps", t)

    def __len__(self) -> int:
        return int(self.taps.size)

    def magnitude_db(self, frequencies) -> np.ndarray:
        """Magnitude response in dB at arbitrary frequencies (direct DTFT)."""
        f = np.atleast_1d(np.asarray(frequencies, dtype=float))
        n = np.arange(len(self))
        phases = np.exp(-2j * np.pi * np.outer(f / self.sample_rate, n))
        mag = np.abs(phases @ self.taps)
        return 20.0 * np.log10(np.maximum(mag, 1e-12))


def _target_db_at(freqs: np.ndarray, centers: np.ndarray, gains: np.ndarray) -> np.ndarray:
    """Monotone cubic through (log2 center, gain), flat beyond the edges."""
    interp = PchipInterpolator(np.log2(centers), gains)
    clipped = np.clip(freqs, centers[0], centers[-1])
    return interp(np.log2(clipped))


def _refinement_knots(centers: np.ndarray) -> np.ndarray:
    """Band centers interleaved with the geometric midpoints between them."""
    midpoints = np.sqrt(centers[:-1] * centers[1:])
    knots = np.empty(2 * len(centers) - 1)
    knots[0::2] = centers
    knots[1::2] = midpoints
    return knots


def _window_kernel(nfft: int, tap_count: int) -> np.ndarray:
    """Frequency-domain smearing kernel of the centered Hann window."""
    window = np.hanning(tap_count)
    padded = np.zeros(nfft)
    half = (tap_count - 1) // 2
    padded[: half + 1] = window[half:]
    if half:
        padded[nfft - half :] = window[:half]
    spec = np.fft.rfft(padded).real
    support = min(int(np.ceil(6 * nfft / tap_count)), nfft // 2)
    kernel = np.concatenate([spec[support:0:-1], spec[: support + 1]])
    return kernel / kernel.sum()


def _smooth_db(db: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Convolve along the frequency grid with even reflection at both ends."""
    pad = (len(kernel) - 1) // 2
    extended = np.concatenate([db[pad:0:-1], db, db[-2 : -pad - 2 : -1]])
    return np.convolve(extended, kernel, mode="valid")


def _correction_db_at(
    freqs: np.ndarray, knots: np.ndarray, values: np.ndarray, fade_hz: float
) -> np.ndarray:
    """Correction curve: cubic across the knots, flat above, faded out below."""
    interp = PchipInterpolator(np.log2(knots), values)
    corrections = interp(np.log2(np.clip(freqs, knots[0], knots[-1])))
    low = freqs < knots[0]
    fade = np.clip((knots[0] - freqs[low]) / fade_hz, 0.0, 1.0)
    corrections[low] *= 0.5 * (1.0 + np.cos(np.pi * fade))
    return corrections


def _window_design(target_db: np.ndarray, nfft: int, tap_count: int) -> np.ndarray:
    """Zero-phase inverse DFT of the sampled target, centered and windowed."""
    h = np.fft.irfft(10.0 ** (target_db / 20.0), nfft)
    h = np.roll(h, nfft // 2)
    mid, half = nfft // 2, (tap_count - 1) // 2
    taps = h[mid - half : mid + half + 1] * np.hanning(tap_count)
    return (taps + taps[::-1]) / 2.0  # enforce exact tap symmetry


def minimum_tap_count(plan: BandPlan, sample_rate: int) -> int:
    """Shortest odd tap count expected to hold tolerance at the lowest center."""
    n = int(np.ceil(1.6 * sample_rate / plan.center_frequencies[0]))
    return n + 1 if n % 2 == 0 else n


def design_eq_filter(
    curve: Curve,
    plan: BandPlan,
    sample_rate: int,
    tap_count: int = DEFAULT_TAP_COUNT,
    tolerance_db: float = DESIGN_TOLERANCE_DB,
) -> FirFilter:
    """Design a linear-phase FIR whose response realizes the gain curve.

    Raises when the tap budget is too short to land every band-center gain
    within ``tolerance_db``, advising a sufficient length.
    """
    if len(curve) != len(plan):
        raise ValueError(
            f"curve has {len(curve)} bands but the band plan has {len(plan)}"
        )
    if tap_count % 2 == 0 or tap_count < 3:
        raise ValueError(f"tap count must be odd and >= 3, got {tap_count}")
    centers = plan.as_array()
    if centers[-1] >= sample_rate / 2:
        raise ValueError(
            f"top band center {centers[-1]:g} Hz is not below Nyquist "
            f"({sample_rate / 2:g} Hz)"
        )
    nfft = 1 << max(14, int(np.ceil(np.log2(4 * tap_count))))
    freqs = np.fft.rfftfreq(nfft, 1.0 / sample_rate)
    requested = np.asarray(curve.gains, dtype=float)

    base_db = _smooth_db(
        _target_db_at(freqs, centers, requested), _window_kernel(nfft, tap_count)
    )
    knots = _refinement_knots(centers)
    knot_targets = np.interp(knots, freqs, base_db)
    knot_targets[0::2] = requested
    fade_hz = 2.0 * sample_rate / tap_count
    correction = np.zeros(len(knots))
    fir = FirFilter(_window_design(base_db, nfft, tap_count), sample_rate)
    for _ in range(_REFINE_PASSES):
        err = fir.magnitude_db(knots) - knot_targets
        if np.max(np.abs(err)) < 0.04 * tolerance_db:
            break
        correction = np.clip(correction - err, -_CORRECTION_CAP_DB, _CORRECTION_CAP_DB)
        fir = FirFilter(
            _window_design(
                base_db + _correction_db_at(freqs, knots, correction, fade_hz),
                nfft,
                tap_count,
            ),
            sample_rate,
        )

    center_err = np.abs(fir.magnitude_db(centers) - requested)
    if np.max(center_err) > tolerance_db:
        worst = int(np.argmax(center_err))
        raise ValueError(
            f"tap count {tap_count} cannot realize the requested gain within "
            f"±{tolerance_db:g} dB at {centers[worst]:g} Hz (error "
            f"{center_err[worst]:.2f} dB); use at least "
            f"{minimum_tap_count(plan, sample_rate)} taps"
        )
    return fir


def apply_fir(clip: AudioClip, fir: FirFilter) -> AudioClip:
    """Convolve each channel, trimming the group delay for same-length output."""
    if clip.sample_rate != fir.sample_rate:
        raise ValueError(
            f"clip at {clip.sample_rate} Hz does not match filter designed for "
            f"{fir.sample_rate} Hz"
        )
    half = (len(fir) - 1) // 2
    out = fftconvolve(clip.samples, fir.taps[:, np.newaxis], mode="full", axes=0)
    out = out[half : half + len(clip)]
    return AudioClip(out, clip.sample_rate)


def load_filter_file(path: str | Path, sample_rate: int | None = None) -> FirFilter:
    """Load an FIR from a WAV impulse response or a single-column text file.

    Text files carry one coefficient per line and require ``sample_rate``.
    An even-length response is zero-padded to odd length.
    """
    path = Path(path)
    if path.suffix.lower() == ".wav":
        clip = wav.read_wav(path)
        taps = clip.samples[:, 0]
        rate = clip.sample_rate
    else:
        taps = np.atleast_1d(np.loadtxt(path, dtype=float))
        if taps.ndim != 1:
            raise ValueError(f"{path}: expected a single column of coefficients")
        if sample_rate is None:
            raise ValueError("sample rate is required for text-format filter files")
        rate = sample_rate
    if taps.size % 2 == 0:
        taps = np.append(taps, 0.0)
    return FirFilter(taps, rate)
