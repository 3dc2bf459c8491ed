"""Drive full sessions with the simulated listener instead of a human.

Each simulated session uses two independent seeded streams: the session's
own RNG (inside ``SessionState``, derived from the config seed) and a
listener RNG standing in for human variability. No audio is rendered; the
oracle judges gain curves directly, which keeps large sweeps fast.

Sessions are independent, so callers may parallelize across them; this
module runs them sequentially.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .analysis import SYSTEM_BEST, SYSTEM_INITIAL, BenchmarkRecord
from .de import Curve
from .listener import ListenerModel, absolute_rating, judge
from .session import (
    EVALUATION_SCALE,
    EvaluationTrialSpec,
    ExperimentConfig,
    SessionState,
    Stage,
    TrialSpec,
    create_session,
    event_lines,
    next_trial,
    save,
    submit_comparison,
    submit_evaluation,
)

# Fixed offsets keeping the listener and hidden-target streams disjoint
# from the session stream while still fully determined by the config seed.
_LISTENER_SEED_OFFSET = 1_000_003
_TARGET_SEED_OFFSET = 2_000_003

ComparisonRater = Callable[[TrialSpec], float]
EvaluationRater = Callable[[EvaluationTrialSpec], Sequence[float]]


@dataclass(frozen=True)
class SimulatedSession:
    """Outcome of one automated session.

    ``benchmark`` holds post-session absolute ratings of the initial curve
    vs. the best-ranked one, per track; empty for random-verdict controls.
    ``model`` is the listener used (None for random verdicts).
    """

    state: SessionState
    benchmark: tuple[BenchmarkRecord, ...]
    model: ListenerModel | None


def run_session(
    config: ExperimentConfig,
    rate_comparison: ComparisonRater,
    rate_evaluation: EvaluationRater,
) -> SessionState:
    """Run a session to Done under arbitrary rating callbacks."""
    state = create_session(config)
    while state.stage is Stage.COMPARISON:
        trial = next_trial(state)
        assert isinstance(trial, TrialSpec)
        state = submit_comparison(state, trial.trial_id, float(rate_comparison(trial)))
    while state.stage is Stage.EVALUATION:
        trial = next_trial(state)
        assert isinstance(trial, EvaluationTrialSpec)
        state = submit_evaluation(
            state, trial.trial_id, [float(x) for x in rate_evaluation(trial)]
        )
    return state


def listener_raters(
    model: ListenerModel, rng: np.random.Generator
) -> tuple[ComparisonRater, EvaluationRater]:
    """Raters backed by the simulated listener."""

    def compare(trial: TrialSpec) -> float:
        return judge(trial.curve_a, trial.curve_b, model, rng)

    def evaluate(trial: EvaluationTrialSpec) -> list[float]:
        return [absolute_rating(curve, model, rng) for curve in trial.curves]

    return compare, evaluate


def random_raters(rng: np.random.Generator) -> tuple[ComparisonRater, EvaluationRater]:
    """Uniformly random verdicts: the non-convergence control."""

    def compare(trial: TrialSpec) -> float:
        return -1.0 if rng.random() < 0.5 else 1.0

    def evaluate(trial: EvaluationTrialSpec) -> list[float]:
        return [float(rng.uniform(*EVALUATION_SCALE)) for _ in trial.curves]

    return compare, evaluate


def random_hidden_target(config: ExperimentConfig, seed: int) -> Curve:
    """A hidden target drawn uniformly within the session bounds."""
    rng = np.random.default_rng(_TARGET_SEED_OFFSET + seed)
    return Curve(rng.uniform(config.bounds.lower.gains, config.bounds.upper.gains))


def run_benchmark(
    state: SessionState, model: ListenerModel, rng: np.random.Generator
) -> tuple[BenchmarkRecord, ...]:
    """Rate the initial curve vs. the best-ranked curve on every track."""
    best = state.best_ranked_curve()
    records = []
    for track in state.config.tracks:
        records.append(
            BenchmarkRecord(
                track_id=track.id,
                system=SYSTEM_INITIAL,
                rating=absolute_rating(state.config.initial_curve, model, rng),
            )
        )
        records.append(
            BenchmarkRecord(
                track_id=track.id,
                system=SYSTEM_BEST,
                rating=absolute_rating(best, model, rng),
            )
        )
    return tuple(records)


def run_listener_session(
    config: ExperimentConfig,
    model: ListenerModel,
    listener_seed: int | None = None,
) -> SimulatedSession:
    """One full session judged by the given listener, plus its benchmark."""
    if listener_seed is None:
        listener_seed = _LISTENER_SEED_OFFSET + config.seed
    rng = np.random.default_rng(listener_seed)
    state = run_session(config, *listener_raters(model, rng))
    return SimulatedSession(state, run_benchmark(state, model, rng), model)


def run_random_session(
    config: ExperimentConfig, listener_seed: int | None = None
) -> SimulatedSession:
    """One full session with uniformly random verdicts (control)."""
    if listener_seed is None:
        listener_seed = _LISTENER_SEED_OFFSET + config.seed
    rng = np.random.default_rng(listener_seed)
    return SimulatedSession(run_session(config, *random_raters(rng)), (), None)


def run_many(
    config: ExperimentConfig,
    n_sessions: int,
    *,
    hidden_target: Curve | None = None,
    noise_sd: float = 0.0,
    indifference_width: float = 0.0,
    random_verdicts: bool = False,
    base_seed: int | None = None,
) -> list[SimulatedSession]:
    """Run ``n_sessions`` independent sessions with consecutive seeds.

    Session i uses seed ``base_seed + i`` (default base: the config seed).
    Unless a fixed ``hidden_target`` is given, each session's listener gets
    its own target drawn uniformly within the bounds.
    """
    if n_sessions < 1:
        raise ValueError(f"need at least one session, got {n_sessions}")
    base = config.seed if base_seed is None else base_seed
    results = []
    for i in range(n_sessions):
        cfg = dataclasses.replace(config, seed=base + i)
        if random_verdicts:
            results.append(run_random_session(cfg))
            continue
        target = hidden_target or random_hidden_target(cfg, cfg.seed)
        model = ListenerModel(
            hidden_target=target,
            noise_sd=noise_sd,
            indifference_width=indifference_width,
        )
        results.append(run_listener_session(cfg, model))
    return results


def write_session_dir(sim: SimulatedSession | SessionState, path: str | Path) -> Path:
    """Write one session directory: snapshot, event log, benchmark records."""
    state = sim.state if isinstance(sim, SimulatedSession) else sim
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    (path / "snapshot.json").write_bytes(save(state))
    lines = event_lines(state)
    (path / "events.jsonl").write_text("".join(line + "\n" for line in lines))
    if isinstance(sim, SimulatedSession) and sim.benchmark:
        (path / "benchmark.jsonl").write_text(
            "".join(
                json.dumps(
                    {"track_id": r.track_id, "system": r.system, "rating": r.rating},
                    sort_keys=True,
                    separators=(",", ":"),
                )
                + "\n"
                for r in sim.benchmark
            )
        )
    return path
