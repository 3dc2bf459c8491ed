"""Simulated listener: distance metric, paired judgments, absolute ratings."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from evoq.de import Bounds, Curve, DEParams, Verdict, init_population, step_generation
from evoq.listener import ListenerModel, absolute_rating, judge, perceptual_distance

TARGET = Curve([1.0, -2.0, 0.5, 0.0, 3.0, -1.0, 0.0, 2.0, -0.5, 1.5])


def model(**kw) -> ListenerModel:
    defaults = dict(hidden_target=TARGET, noise_sd=0.0, indifference_width=0.0)
    defaults.update(kw)
    return ListenerModel(**defaults)


gain_arrays = st.lists(
    st.floats(-6, 6, allow_nan=False, allow_infinity=False), min_size=10, max_size=10
)


# -- model validation ------------------------------------------------------------


def test_model_rejects_bad_parameters():
    with pytest.raises(ValueError):
        ListenerModel(hidden_target=TARGET, noise_sd=-0.1)
    with pytest.raises(ValueError):
        ListenerModel(hidden_target=TARGET, indifference_width=-1.0)
    with pytest.raises(ValueError):
        ListenerModel(hidden_target=TARGET, band_weights=np.zeros(10))
    with pytest.raises(ValueError):
        ListenerModel(hidden_target=TARGET, band_weights=-np.ones(10))


# -- perceptual_distance -----------------------------------------------------------


def test_distance_zero_at_target():
    assert perceptual_distance(TARGET, model()) == 0.0


def test_distance_single_band_closed_form():
    # One band off by 2 dB out of 10, uniform weights: 2 / sqrt(10).
    gains = list(TARGET.gains)
    gains[4] += 2.0
    d = perceptual_distance(Curve(gains), model())
    assert d == pytest.approx(2.0 / math.sqrt(10.0), abs=1e-12)


@given(gain_arrays)
def test_distance_invariant_to_weight_scaling(gains):
    curve = Curve(gains)
    w = np.linspace(0.5, 2.0, 10)
    d1 = perceptual_distance(curve, model(band_weights=w))
    d2 = perceptual_distance(curve, model(band_weights=2.0 * w))
    assert d1 == pytest.approx(d2, rel=1e-12)


def test_distance_ignores_zero_weight_bands():
    w = np.ones(10)
    w[0] = 0.0
    gains = list(TARGET.gains)
    gains[0] += 50.0  # arbitrarily wrong in the ignored band
    assert perceptual_distance(Curve(gains), model(band_weights=w)) == 0.0


def test_distance_band_count_mismatch():
    with pytest.raises(ValueError):
        perceptual_distance(Curve([0.0] * 9), model())


# -- judge ---------------------------------------------------------------------------


def test_judge_favors_the_target_side():
    b = Curve(TARGET.gains + 1.0)
    rating = judge(TARGET, b, model(), np.random.default_rng(0))
    assert -1.0 <= rating < 0.0  # "A is better" side
    mirrored = judge(b, TARGET, model(), np.random.default_rng(0))
    assert mirrored > 0.0


def test_judge_identical_pair_is_same():
    assert judge(TARGET, TARGET, model(), np.random.default_rng(0)) == 0.0


def test_judge_indifference_region_rates_same():
    close = Curve(TARGET.gains + 0.05)  # distance 0.05 < half-width 0.25
    m = model(indifference_width=0.25)
    assert judge(TARGET, close, m, np.random.default_rng(0)) == 0.0
    far = Curve(TARGET.gains + 1.0)
    assert judge(TARGET, far, m, np.random.default_rng(0)) != 0.0


@given(gain_arrays, gain_arrays, st.integers(0, 2**32 - 1))
def test_judge_is_bounded_and_mirror_symmetric(gains_a, gains_b, seed):
    a, b = Curve(gains_a), Curve(gains_b)
    m = model(noise_sd=0.5, indifference_width=0.25)
    forward = judge(a, b, m, np.random.default_rng(seed))
    backward = judge(b, a, m, np.random.default_rng(seed))
    assert -1.0 <= forward <= 1.0
    # Same unordered pair, same noise draw: mirrored rating.
    assert forward == pytest.approx(-backward, abs=1e-12)


@given(gain_arrays, gain_arrays, gain_arrays)
def test_judge_zero_noise_is_transitive(ga, gb, gc):
    m = model()
    rng = np.random.default_rng(0)
    curves = sorted(
        [Curve(ga), Curve(gb), Curve(gc)], key=lambda c: perceptual_distance(c, m)
    )
    for i in range(3):
        for j in range(i + 1, 3):
            rating = judge(curves[i], curves[j], m, rng)
            if perceptual_distance(curves[i], m) < perceptual_distance(curves[j], m):
                assert rating < 0.0
            else:
                assert rating <= 0.0  # equal distances may rate "Same"


def test_judge_magnitude_monotone_in_distance_gap():
    rng = np.random.default_rng(0)
    magnitudes = [
        abs(judge(TARGET, Curve(TARGET.gains + off), model(), rng))
        for off in (0.25, 0.5, 1.0, 2.0, 4.0)
    ]
    assert magnitudes == sorted(magnitudes)
    assert magnitudes[-1] < 1.0  # squashed, never saturates exactly


def test_judge_overwhelming_noise_is_a_fair_coin():
    m = model(noise_sd=1e6)
    rng = np.random.default_rng(5)
    a = TARGET
    b = Curve(TARGET.gains + 0.5)
    a_wins = sum(judge(a, b, m, rng) < 0.0 for _ in range(10_000))
    assert 0.48 <= a_wins / 10_000 <= 0.52


def test_zero_noise_evolution_never_worsens_best_distance():
    m = model()
    bounds = Bounds.uniform(-3, 3)
    params = DEParams()

    def fitness(reference, trial):
        rating = judge(reference, trial, m, np.random.default_rng(0))
        if rating == 0.0:
            return Verdict.TIE
        return Verdict.REFERENCE if rating < 0.0 else Verdict.TRIAL

    for seed in range(10):
        rng = np.random.default_rng(seed)
        pop = init_population(Curve([0.0] * 10), bounds, params, rng)
        best = min(perceptual_distance(mem.curve, m) for mem in pop.members)
        for _ in range(4):
            pop = step_generation(pop, bounds, params, fitness, rng)
            now = min(perceptual_distance(mem.curve, m) for mem in pop.members)
            assert now <= best + 1e-12
            best = now


# -- absolute_rating -------------------------------------------------------------------


def test_absolute_rating_target_scores_top():
    assert absolute_rating(TARGET, model(), np.random.default_rng(0)) == 5.0


def test_absolute_rating_decreases_with_distance_and_stays_in_scale():
    rng = np.random.default_rng(0)
    ratings = [
        absolute_rating(Curve(TARGET.gains + off), model(), rng)
        for off in (0.0, 0.5, 1.0, 2.0, 5.0, 20.0)
    ]
    assert ratings == sorted(ratings, reverse=True)
    assert all(1.0 <= r <= 5.0 for r in ratings)
    assert ratings[-1] == pytest.approx(1.0, abs=1e-3)


@given(gain_arrays, st.integers(0, 2**32 - 1))
def test_absolute_rating_always_in_scale_under_noise(gains, seed):
    m = model(noise_sd=2.0)
    r = absolute_rating(Curve(gains), m, np.random.default_rng(seed))
    assert 1.0 <= r <= 5.0
