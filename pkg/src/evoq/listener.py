"""Simulated-preference oracle standing in for a human listener.

The model carries a hidden target curve playing the role of the listener's
internal ideal. Preference is driven by the weighted RMS gain deviation
from that target. Judgments add Gaussian noise on the distance difference
and report on the bipolar comparison scale (-1 = "A is better", 0 = "Same",
+1 = "B is better"); an absolute [1, 5] quality rating is provided for
multi-stimulus screens.

Noise draws attach to the unordered stimulus pair (the pair is oriented
canonically before the draw), so judging (a, b) and (b, a) from the same
generator state yields exactly mirrored ratings. With ``noise_sd == 0`` no
draw is consumed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .de import Curve

# Logistic slope (dB) mapping distance differences onto the bipolar scale,
# and the decay constant (dB) of the absolute quality map. Both shape only
# the diagnostic magnitude of ratings, never the preferred side.
BIPOLAR_SLOPE_DB = 1.0
QUALITY_DECAY_DB = 2.0


@dataclass(frozen=True)
class ListenerModel:
    """Parameters of the simulated listener.

    ``noise_sd`` is the Gaussian SD (dB) applied to perceived distance
    differences; ``indifference_width`` is the half-width (dB) of the
    "Same" region. Band weights default to uniform.
    """

    hidden_target: Curve
    band_weights: np.ndarray | None = None
    noise_sd: float = 0.5
    indifference_width: float = 0.25

    def __post_init__(self):
        if self.band_weights is not None:
            w = np.asarray(self.band_weights, dtype=float)
            if w.shape != (len(self.hidden_target),):
                raise ValueError("band weights must match the target's band count")
            if not np.all(np.isfinite(w)) or np.any(w < 0):
                raise ValueError("band weights must be finite and non-negative")
            if not np.any(w > 0):
                raise ValueError("band weights must not all be zero")
            w = w.copy()
            w.setflags(write=False)
            object.__setattr__(self, "band_weights", w)
        if self.noise_sd < 0:
            raise ValueError("noise SD must be >= 0")
        if self.indifference_width < 0:
            raise ValueError("indifference width must be >= 0")

    def weights(self) -> np.ndarray:
        if self.band_weights is None:
            return np.ones(len(self.hidden_target))
        return self.band_weights


def perceptual_distance(curve: Curve, model: ListenerModel) -> float:
    """Weighted RMS gain deviation (dB) of ``curve`` from the hidden target."""
    if len(curve) != len(model.hidden_target):
        raise ValueError("curve and hidden target differ in band count")
    w = model.weights()
    diff = curve.gains - model.hidden_target.gains
    return float(math.sqrt(np.sum(w * diff * diff) / np.sum(w)))


def _oriented_noise(
    curve_a: Curve, curve_b: Curve, model: ListenerModel, rng: np.random.Generator
) -> float:
    """One noise draw, signed by the canonical orientation of the pair.

    Identical stimuli present no difference to perceive, so they draw no
    noise; that keeps swapped presentations exactly mirrored.
    """
    if model.noise_sd == 0 or curve_a == curve_b:
        return 0.0
    eps = float(rng.normal(0.0, model.noise_sd))
    # Orient by gain vectors so the draw is a property of the unordered pair.
    if curve_b.tolist() < curve_a.tolist():
        eps = -eps
    return eps


def judge(
    curve_a: Curve, curve_b: Curve, model: ListenerModel, rng: np.random.Generator
) -> float:
    """Rate a paired comparison on the bipolar scale.

    Computes d = distance(B) - distance(A) + noise; |d| inside the
    indifference width rates exactly 0 ("Same"), otherwise the rating's
    sign favors the lower-distance stimulus and its magnitude is a bounded
    logistic map of |d|.
    """
    d = (
        perceptual_distance(curve_b, model)
        - perceptual_distance(curve_a, model)
        + _oriented_noise(curve_a, curve_b, model, rng)
    )
    if abs(d) < model.indifference_width:
        return 0.0
    return -math.tanh(d / (2.0 * BIPOLAR_SLOPE_DB))


def absolute_rating(
    curve: Curve, model: ListenerModel, rng: np.random.Generator
) -> float:
    """Rate a single stimulus on the [1, 5] quality scale.

    Monotone decreasing in the perceived distance: the hidden target itself
    rates 5.0 and quality decays exponentially with distance. Noise is
    applied to the perceived distance before the map.
    """
    d = perceptual_distance(curve, model)
    if model.noise_sd > 0:
        d += float(rng.normal(0.0, model.noise_sd))
    rating = 1.0 + 4.0 * math.exp(-max(d, 0.0) / QUALITY_DECAY_DB)
    return float(min(5.0, max(1.0, rating)))
