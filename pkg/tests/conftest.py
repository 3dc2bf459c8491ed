"""Shared fixtures: experiment configs, synthetic program material, reporting."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from scipy.signal import lfilter

from evoq.de import Bounds, Curve, DEParams
from evoq.dsp import AudioClip, write_wav
from evoq.session import ExperimentConfig, TrackSpec

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


def music_like(
    seconds: float = 1.2,
    sample_rate: int = 48000,
    channels: int = 1,
    seed: int = 0,
    level: float = 0.25,
) -> AudioClip:
    """Noise tilted toward low frequencies with a slow level envelope.

    Stands in for program material: broadband, non-stationary, headroom left
    for EQ boosts.
    """
    rng = np.random.default_rng(seed)
    n = int(round(seconds * sample_rate))
    white = rng.standard_normal((n, channels))
    tilted = lfilter([1.0], [1.0, -0.85], white, axis=0)
    t = np.arange(n) / sample_rate
    envelope = 0.6 + 0.4 * np.sin(2.0 * np.pi * 1.3 * t + rng.uniform(0, 2 * np.pi))
    shaped = tilted * envelope[:, np.newaxis]
    shaped *= level / np.max(np.abs(shaped))
    return AudioClip(shaped, sample_rate)


def make_config(
    *,
    seed: int = 0,
    generations: int = 8,
    population_size: int = 5,
    bands: int = 10,
    bound_db: float = 3.0,
    tracks: list[TrackSpec] | None = None,
    **overrides,
) -> ExperimentConfig:
    """Experiment config with the stock defaults and two placeholder tracks."""
    if tracks is None:
        tracks = [TrackSpec("t0", "t0.wav"), TrackSpec("t1", "t1.wav")]
    return ExperimentConfig(
        de_params=DEParams(
            scale_factor=0.2,
            crossover_rate=0.7,
            population_size=population_size,
            generations=generations,
            seed=seed,
        ),
        bounds=Bounds.uniform(-bound_db, bound_db, bands),
        initial_curve=Curve([0.0] * bands),
        tracks=tracks,
        seed=seed,
        **overrides,
    )


@pytest.fixture(scope="session")
def track_files(tmp_path_factory) -> list:
    """Two short real WAV tracks on disk for rendering/service tests."""
    root = tmp_path_factory.mktemp("tracks")
    paths = []
    for i in range(2):
        clip = music_like(seconds=0.7, seed=100 + i)
        path = root / f"track{i}.wav"
        write_wav(path, clip, encoding="float32")
        paths.append(path)
    return paths


def make_audio_config(track_files, **overrides) -> ExperimentConfig:
    """Config whose tracks exist on disk; kept cheap enough to render live."""
    defaults = dict(generations=2, tap_count=1535)
    defaults.update(overrides)
    tracks = [TrackSpec(f"t{i}", str(p)) for i, p in enumerate(track_files)]
    return make_config(tracks=tracks, **defaults)


# -- acceptance reporting ------------------------------------------------------
#
# Acceptance tests register one human-readable verdict line each; the lines are
# echoed in the terminal summary so they survive output capture.


@pytest.fixture
def acceptance_report(request):
    def emit(line: str) -> None:
        lines = getattr(request.config, "_acceptance_lines", [])
        request.config._acceptance_lines = lines + [line]
        print(line)

    return emit


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
