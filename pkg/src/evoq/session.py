"""Experiment state machine for one listening session.

A session walks a fixed schedule: a comparison stage of paired trials that
drive the evolutionary search (one trial per population member per
generation), then an evaluation stage rating the final curves plus a flat
anchor once per track, then Done. States are immutable snapshots; every
operation returns a new state. All randomness flows through one seeded
generator whose state is carried inside the snapshot, which is what makes
sessions resumable and replayable bit for bit.

RNG draw order (single stream, continuing the optimizer's documented order):
  * session creation: the generation-0 uniform block;
  * at each comparison set start: member-order permutation, then track-order
    permutation;
  * per comparison trial, at proposal time: donor triple, per-gene crossover
    uniforms, then one uniform deciding whether the reference plays as "A";
  * at the evaluation transition: screen (track) order permutation, then one
    stimulus-order permutation per screen.

The event log contains no timestamps, so a log produced by an interrupted
and resumed session is byte-identical to an uninterrupted one.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import yaml

from . import de
from .de import Bounds, Curve, DEParams, Population, Verdict
from .dsp.filters import BandPlan, DEFAULT_TAP_COUNT
from .dsp.render import DEFAULT_TARGET_LUFS

log = logging.getLogger(__name__)

#: Stimulus label of the unprocessed (zero-gain) anchor on evaluation screens.
ANCHOR_ID = "anchor"

#: The absolute rating scale of the evaluation stage (fixed).
EVALUATION_SCALE = (1.0, 5.0)

#: The bipolar comparison scale (fixed); -1 = "A is better", +1 = "B is better".
BIPOLAR_SCALE = (-1.0, 1.0)

SNAPSHOT_FORMAT = "evoq-session"
SNAPSHOT_VERSION = 1


class SessionError(Exception):
    """Base class for session-contract violations."""


class ConfigError(SessionError):
    """Invalid experiment configuration; carries every problem found."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("invalid experiment config: " + "; ".join(self.problems))


class StaleTrialError(SessionError):
    """A submission referenced a trial that is not the pending one."""


class SessionDoneError(SessionError):
    """The session has finished; no further trials exist."""


class SnapshotError(SessionError):
    """A persisted session payload could not be decoded."""


class ReplayError(SessionError):
    """An event log is inconsistent with the schedule it claims to replay."""


class Stage(Enum):
    COMPARISON = "comparison"
    EVALUATION = "evaluation"
    DONE = "done"


@dataclass(frozen=True)
class BipolarRating:
    """Continuous paired-comparison rating in [-1, +1].

    -1 means "A is better", 0 means "Same", +1 means "B is better".
    """

    value: float

    def __post_init__(self):
        v = float(self.value)
        if not np.isfinite(v) or not BIPOLAR_SCALE[0] <= v <= BIPOLAR_SCALE[1]:
            raise ValueError(f"bipolar rating must be in [-1, +1], got {self.value!r}")
        object.__setattr__(self, "value", v)


@dataclass(frozen=True)
class EvaluationRating:
    """Absolute quality rating in [1, 5] for one stimulus."""

    value: float

    def __post_init__(self):
        v = float(self.value)
        if not np.isfinite(v) or not EVALUATION_SCALE[0] <= v <= EVALUATION_SCALE[1]:
            raise ValueError(f"evaluation rating must be in [1, 5], got {self.value!r}")
        object.__setattr__(self, "value", v)


@dataclass(frozen=True)
class TrackSpec:
    """One program-material excerpt available for trials."""

    id: str
    path: str
    start: float = 0.0
    duration: float | None = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("track id must be non-empty")
        if self.start < 0:
            raise ValueError(f"track {self.id!r}: start must be >= 0")
        if self.duration is not None and self.duration <= 0:
            raise ValueError(f"track {self.id!r}: duration must be positive")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that defines a session, sufficient to replay it.

    ``seed`` drives the session's single RNG stream. (``de_params.seed``
    exists for driving the optimizer standalone and is ignored here.)
    """

    de_params: DEParams
    bounds: Bounds
    initial_curve: Curve
    tracks: tuple[TrackSpec, ...]
    band_plan: BandPlan = BandPlan()
    target_lufs: float = DEFAULT_TARGET_LUFS
    tap_count: int = DEFAULT_TAP_COUNT
    compensation: str | None = None
    evaluation_scale: tuple[float, float] = EVALUATION_SCALE
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "tracks", tuple(self.tracks))
        problems: list[str] = []
        bands = len(self.bounds)
        if len(self.initial_curve) != bands:
            problems.append(
                f"initial curve has {len(self.initial_curve)} bands, bounds have {bands}"
            )
        else:
            for i in self.bounds.violations(self.initial_curve):
                problems.append(
                    f"initial curve out of bounds at band {i}: "
                    f"{self.initial_curve.gains[i]:g} not in "
                    f"[{self.bounds.lower.gains[i]:g}, {self.bounds.upper.gains[i]:g}]"
                )
        if len(self.band_plan) != bands:
            problems.append(
                f"band plan has {len(self.band_plan)} centers, bounds have {bands} bands"
            )
        if not self.tracks:
            problems.append("at least one track is required")
        ids = [t.id for t in self.tracks]
        if len(set(ids)) != len(ids):
            problems.append("track ids must be unique")
        if not np.isfinite(self.target_lufs):
            problems.append(f"target loudness must be finite, got {self.target_lufs!r}")
        if self.tap_count < 3 or self.tap_count % 2 == 0:
            problems.append(f"tap count must be odd and >= 3, got {self.tap_count}")
        if tuple(float(x) for x in self.evaluation_scale) != EVALUATION_SCALE:
            problems.append(
                f"evaluation scale is fixed at [1, 5], got {list(self.evaluation_scale)}"
            )
        if problems:
            raise ConfigError(problems)

    @property
    def bands(self) -> int:
        return len(self.bounds)

    def track(self, track_id: str) -> TrackSpec:
        for t in self.tracks:
            if t.id == track_id:
                return t
        raise KeyError(f"unknown track id {track_id!r}")


@dataclass(frozen=True)
class TrialSpec:
    """One paired-comparison screen: reference vs. trial vector, blinded.

    ``curve_a``/``curve_b`` are the curves played as stimulus A and B;
    which side holds the reference is recorded in ``reference_is_a`` and
    must never reach the listener.
    """

    trial_id: str
    generation: int
    member_id: str
    track_id: str
    reference_is_a: bool
    curve_a: Curve
    curve_b: Curve

    @property
    def reference_curve(self) -> Curve:
        return self.curve_a if self.reference_is_a else self.curve_b

    @property
    def challenger_curve(self) -> Curve:
        return self.curve_b if self.reference_is_a else self.curve_a


@dataclass(frozen=True)
class EvaluationTrialSpec:
    """One multi-stimulus screen: the final curves plus the flat anchor.

    ``sources`` names the member behind each slot (or the anchor) in the
    randomized presentation order; it must never reach the listener.
    """

    trial_id: str
    track_id: str
    sources: tuple[str, ...]
    curves: tuple[Curve, ...]

    def __post_init__(self):
        if len(self.sources) != len(self.curves):
            raise ValueError("sources and curves differ in length")


@dataclass(frozen=True)
class ComparisonRecord:
    """Completed paired trial with full curve parameters and the verdict."""

    trial_id: str
    generation: int
    member_id: str
    track_id: str
    reference_is_a: bool
    curve_a: Curve
    curve_b: Curve
    rating: float
    verdict: Verdict


@dataclass(frozen=True)
class EvaluationRecord:
    """Completed multi-stimulus screen with per-stimulus ratings."""

    trial_id: str
    track_id: str
    sources: tuple[str, ...]
    curves: tuple[Curve, ...]
    ratings: tuple[float, ...]


@dataclass(frozen=True)
class SessionState:
    """Immutable snapshot of a session between commands."""

    config: ExperimentConfig
    config_hash: str
    created_at: str
    stage: Stage
    population: Population
    history: tuple[Population, ...]
    set_plan: tuple[tuple[str, str], ...]
    set_index: int
    eval_plan: tuple[EvaluationTrialSpec, ...]
    eval_index: int
    pending: TrialSpec | EvaluationTrialSpec | None
    comparison_records: tuple[ComparisonRecord, ...]
    evaluation_records: tuple[EvaluationRecord, ...]
    rng_state: dict
    best_ranked_id: str | None

    def __post_init__(self):
        if len(self.history) != self.population.generation + 1:
            raise ValueError(
                f"history holds {len(self.history)} generations but the "
                f"population is at generation {self.population.generation}"
            )

    @property
    def comparison_total(self) -> int:
        return self.config.de_params.generations * self.config.de_params.population_size

    @property
    def evaluation_total(self) -> int:
        return len(self.config.tracks)

    @property
    def progress(self) -> dict:
        """Stage plus trials completed/total, as shown to the listener."""
        done = len(self.comparison_records) + len(self.evaluation_records)
        total = self.comparison_total + self.evaluation_total
        return {"stage": self.stage.value, "completed": done, "total": total}

    def best_ranked_curve(self) -> Curve:
        if self.best_ranked_id is None:
            raise SessionDoneError("best-ranked curve exists only once the session is Done")
        return self.population.member(self.best_ranked_id).curve


def binarize(rating: BipolarRating, reference_is_a: bool) -> Verdict:
    """Collapse a bipolar rating to the binary verdict the optimizer needs.

    Negative ratings prefer stimulus A, positive prefer B, exactly zero is
    a tie; the A/B assignment maps the preferred side onto reference/trial.
    """
    if rating.value == 0.0:
        return Verdict.TIE
    a_preferred = rating.value < 0.0
    if a_preferred == reference_is_a:
        return Verdict.REFERENCE
    return Verdict.TRIAL


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _rng_from_state(state: dict) -> np.random.Generator:
    rng = np.random.default_rng()
    rng.bit_generator.state = copy.deepcopy(state)
    return rng


def _rng_snapshot(rng: np.random.Generator) -> dict:
    return copy.deepcopy(rng.bit_generator.state)


def _flat_curve(bands: int) -> Curve:
    return Curve(np.zeros(bands))


def _draw_set_plan(
    config: ExperimentConfig, pool: Population, rng: np.random.Generator
) -> tuple[tuple[str, str], ...]:
    """Randomize member order and track order for one comparison set.

    Tracks are cycled through a fresh shuffle, so a set never repeats a
    track until all tracks have been heard.
    """
    member_order = rng.permutation(len(pool))
    track_order = rng.permutation(len(config.tracks))
    member_ids = [pool.members[int(p)].id for p in member_order]
    return tuple(
        (member_ids[i], config.tracks[int(track_order[i % len(track_order)])].id)
        for i in range(len(member_ids))
    )


def _propose_comparison(
    config: ExperimentConfig,
    pool: Population,
    slot: tuple[str, str],
    trial_number: int,
    rng: np.random.Generator,
) -> TrialSpec:
    member_id, track_id = slot
    index = pool.index_of(member_id)
    reference = pool.members[index].curve
    challenger = de.propose_trial(pool, index, config.bounds, config.de_params, rng)
    if challenger == reference:
        log.info(
            "trial %d: trial vector degenerated to the reference of member %s",
            trial_number,
            member_id,
        )
    reference_is_a = bool(rng.random() < 0.5)
    curve_a, curve_b = (
        (reference, challenger) if reference_is_a else (challenger, reference)
    )
    return TrialSpec(
        trial_id=f"c{trial_number:03d}",
        generation=pool.generation,
        member_id=member_id,
        track_id=track_id,
        reference_is_a=reference_is_a,
        curve_a=curve_a,
        curve_b=curve_b,
    )


def _draw_eval_plan(
    config: ExperimentConfig, pool: Population, rng: np.random.Generator
) -> tuple[EvaluationTrialSpec, ...]:
    """One multi-stimulus screen per track: final curves plus the flat anchor."""
    track_order = rng.permutation(len(config.tracks))
    slots = [(m.id, m.curve) for m in pool.members]
    slots.append((ANCHOR_ID, _flat_curve(config.bands)))
    screens = []
    for n, t in enumerate(track_order, start=1):
        order = rng.permutation(len(slots))
        screens.append(
            EvaluationTrialSpec(
                trial_id=f"e{n:03d}",
                track_id=config.tracks[int(t)].id,
                sources=tuple(slots[int(i)][0] for i in order),
                curves=tuple(slots[int(i)][1] for i in order),
            )
        )
    return tuple(screens)


def config_hash(config: ExperimentConfig) -> str:
    payload = json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()


def create_session(config: ExperimentConfig) -> SessionState:
    """Initialize a session: generation-0 pool plus the first pending trial."""
    rng = np.random.default_rng(config.seed)
    pool = de.init_population(config.initial_curve, config.bounds, config.de_params, rng)
    set_plan = _draw_set_plan(config, pool, rng)
    pending = _propose_comparison(config, pool, set_plan[0], 1, rng)
    return SessionState(
        config=config,
        config_hash=config_hash(config),
        created_at=_now(),
        stage=Stage.COMPARISON,
        population=pool,
        history=(pool,),
        set_plan=set_plan,
        set_index=0,
        eval_plan=(),
        eval_index=0,
        pending=pending,
        comparison_records=(),
        evaluation_records=(),
        rng_state=_rng_snapshot(rng),
        best_ranked_id=None,
    )


def next_trial(state: SessionState) -> TrialSpec | EvaluationTrialSpec:
    """Return the pending trial. Pure read: repeated calls yield the same spec."""
    if state.stage is Stage.DONE:
        raise SessionDoneError("session is Done; no further trials")
    assert state.pending is not None
    return state.pending


def submit_comparison(
    state: SessionState, trial_id: str, rating: BipolarRating | float
) -> SessionState:
    """Apply a paired-comparison rating and advance the schedule."""
    if state.stage is not Stage.COMPARISON:
        raise StaleTrialError(f"no comparison pending in stage {state.stage.value!r}")
    pending = state.pending
    assert isinstance(pending, TrialSpec)
    if trial_id != pending.trial_id:
        raise StaleTrialError(
            f"trial {trial_id!r} is not pending (expected {pending.trial_id!r})"
        )
    if not isinstance(rating, BipolarRating):
        rating = BipolarRating(rating)
    verdict = binarize(rating, pending.reference_is_a)
    pool = de.select(pending.member_id, pending.challenger_curve, verdict, state.population)
    record = ComparisonRecord(
        trial_id=pending.trial_id,
        generation=pending.generation,
        member_id=pending.member_id,
        track_id=pending.track_id,
        reference_is_a=pending.reference_is_a,
        curve_a=pending.curve_a,
        curve_b=pending.curve_b,
        rating=rating.value,
        verdict=verdict,
    )
    records = state.comparison_records + (record,)
    rng = _rng_from_state(state.rng_state)
    set_index = state.set_index + 1
    trial_number = len(records) + 1

    if set_index < len(state.set_plan):
        pending2 = _propose_comparison(
            state.config, pool, state.set_plan[set_index], trial_number, rng
        )
        return replace(
            state,
            population=pool,
            set_index=set_index,
            pending=pending2,
            comparison_records=records,
            rng_state=_rng_snapshot(rng),
        )

    pool = Population(pool.generation + 1, pool.members)
    history = state.history + (pool,)
    if pool.generation >= state.config.de_params.generations:
        eval_plan = _draw_eval_plan(state.config, pool, rng)
        return replace(
            state,
            stage=Stage.EVALUATION,
            population=pool,
            history=history,
            set_plan=(),
            set_index=0,
            eval_plan=eval_plan,
            eval_index=0,
            pending=eval_plan[0],
            comparison_records=records,
            rng_state=_rng_snapshot(rng),
        )
    set_plan = _draw_set_plan(state.config, pool, rng)
    pending2 = _propose_comparison(state.config, pool, set_plan[0], trial_number, rng)
    return replace(
        state,
        population=pool,
        history=history,
        set_plan=set_plan,
        set_index=0,
        pending=pending2,
        comparison_records=records,
        rng_state=_rng_snapshot(rng),
    )


def _best_ranked(
    pool: Population, records: Sequence[EvaluationRecord]
) -> str:
    """Highest mean rating across tracks; ties go to the earliest member."""
    totals: dict[str, list[float]] = {m.id: [] for m in pool.members}
    for record in records:
        for source, value in zip(record.sources, record.ratings):
            if source != ANCHOR_ID:
                totals[source].append(value)
    means = {mid: float(np.mean(vals)) for mid, vals in totals.items()}
    best = max(means.values())
    for member in pool.members:  # creation order breaks ties
        if means[member.id] == best:
            return member.id
    raise AssertionError("unreachable: some member must attain the maximum")


def submit_evaluation(
    state: SessionState,
    trial_id: str,
    ratings: Sequence[EvaluationRating | float],
) -> SessionState:
    """Apply one screen's ratings; after the final track the session is Done."""
    if state.stage is not Stage.EVALUATION:
        raise StaleTrialError(f"no evaluation pending in stage {state.stage.value!r}")
    pending = state.pending
    assert isinstance(pending, EvaluationTrialSpec)
    if trial_id != pending.trial_id:
        raise StaleTrialError(
            f"trial {trial_id!r} is not pending (expected {pending.trial_id!r})"
        )
    if len(ratings) != len(pending.sources):
        raise ValueError(
            f"screen has {len(pending.sources)} stimuli but {len(ratings)} ratings given"
        )
    values = tuple(
        (r if isinstance(r, EvaluationRating) else EvaluationRating(r)).value
        for r in ratings
    )
    record = EvaluationRecord(
        trial_id=pending.trial_id,
        track_id=pending.track_id,
        sources=pending.sources,
        curves=pending.curves,
        ratings=values,
    )
    records = state.evaluation_records + (record,)
    eval_index = state.eval_index + 1
    if eval_index < len(state.eval_plan):
        return replace(
            state,
            eval_index=eval_index,
            pending=state.eval_plan[eval_index],
            evaluation_records=records,
        )
    return replace(
        state,
        stage=Stage.DONE,
        eval_index=eval_index,
        pending=None,
        evaluation_records=records,
        best_ranked_id=_best_ranked(state.population, records),
    )


# --------------------------------------------------------------------------
# Configuration files
# --------------------------------------------------------------------------

def _expand_gains(value, bands: int, label: str) -> list[float]:
    """Allow scalar shorthand for per-band gain lists in config files."""
    if isinstance(value, (int, float)):
        return [float(value)] * bands
    gains = [float(x) for x in value]
    if len(gains) != bands:
        raise ValueError(f"{label} must have {bands} values, got {len(gains)}")
    return gains


_CONFIG_KEYS = frozenset(
    {
        "seed",
        "de",
        "bounds",
        "initial_curve",
        "band_centers",
        "tracks",
        "target_lufs",
        "tap_count",
        "compensation",
        "evaluation_scale",
    }
)


def config_from_dict(data: dict) -> ExperimentConfig:
    """Build a config from plain data, collecting every problem found."""
    if not isinstance(data, dict):
        raise ConfigError([f"config root must be a mapping, got {type(data).__name__}"])
    problems: list[str] = []
    for key in data:
        if key not in _CONFIG_KEYS:
            problems.append(
                f"unknown key {key!r} (expected one of: {', '.join(sorted(_CONFIG_KEYS))})"
            )

    def grab(key, default=None):
        return data.get(key, default)

    centers = grab("band_centers")
    try:
        plan = BandPlan(tuple(centers)) if centers is not None else BandPlan()
    except (TypeError, ValueError) as exc:
        problems.append(f"band_centers: {exc}")
        plan = BandPlan()
    bands = len(plan)

    de_raw = grab("de", {})
    if not isinstance(de_raw, dict):
        problems.append(f"de: must be a mapping, got {type(de_raw).__name__}")
        de_raw = {}
    seed = grab("seed", 0)
    try:
        params = DEParams(
            scale_factor=float(de_raw.get("scale_factor", 0.2)),
            crossover_rate=float(de_raw.get("crossover_rate", 0.7)),
            population_size=int(de_raw.get("population_size", 5)),
            generations=int(de_raw.get("generations", 8)),
            seed=int(seed),
        )
    except (TypeError, ValueError, AttributeError) as exc:
        problems.append(f"de: {exc}")
        params = DEParams()

    bounds_raw = grab("bounds", {})
    if isinstance(bounds_raw, (int, float)) and not isinstance(bounds_raw, bool):
        half_span = abs(float(bounds_raw))
        bounds_raw = {"lower": -half_span, "upper": half_span}
    if not isinstance(bounds_raw, dict):
        problems.append(
            "bounds: must be a number (symmetric +/- dB) or a mapping with "
            f"lower/upper, got {type(bounds_raw).__name__}"
        )
        bounds_raw = {}
    try:
        lower = _expand_gains(bounds_raw.get("lower", -3.0), bands, "bounds.lower")
        upper = _expand_gains(bounds_raw.get("upper", 3.0), bands, "bounds.upper")
        bounds = Bounds(Curve(np.array(lower)), Curve(np.array(upper)))
    except (TypeError, ValueError, AttributeError) as exc:
        problems.append(f"bounds: {exc}")
        bounds = Bounds.uniform(-3.0, 3.0, bands)

    try:
        initial = Curve(np.array(_expand_gains(grab("initial_curve", 0.0), bands, "initial_curve")))
    except (TypeError, ValueError) as exc:
        problems.append(f"initial_curve: {exc}")
        initial = _flat_curve(bands)

    tracks: list[TrackSpec] = []
    raw_tracks = grab("tracks", [])
    if not isinstance(raw_tracks, list):
        problems.append("tracks must be a list")
        raw_tracks = []
    for i, t in enumerate(raw_tracks):
        try:
            tracks.append(
                TrackSpec(
                    id=str(t["id"]),
                    path=str(t["path"]),
                    start=float(t.get("start", 0.0)),
                    duration=(float(t["duration"]) if t.get("duration") is not None else None),
                )
            )
        except (TypeError, KeyError, ValueError) as exc:
            problems.append(f"tracks[{i}]: {exc!r}")

    extras = {}
    try:
        extras["target_lufs"] = float(grab("target_lufs", DEFAULT_TARGET_LUFS))
    except (TypeError, ValueError) as exc:
        problems.append(f"target_lufs: {exc}")
    try:
        extras["tap_count"] = int(grab("tap_count", DEFAULT_TAP_COUNT))
    except (TypeError, ValueError) as exc:
        problems.append(f"tap_count: {exc}")
    compensation = grab("compensation")
    scale = grab("evaluation_scale", list(EVALUATION_SCALE))

    if problems:
        raise ConfigError(problems)
    try:
        return ExperimentConfig(
            de_params=params,
            bounds=bounds,
            initial_curve=initial,
            tracks=tuple(tracks),
            band_plan=plan,
            compensation=(str(compensation) if compensation is not None else None),
            evaluation_scale=tuple(float(x) for x in scale),
            seed=int(seed),
            **extras,
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError([str(exc)]) from exc


def config_to_dict(config: ExperimentConfig) -> dict:
    return {
        "seed": config.seed,
        "de": {
            "scale_factor": config.de_params.scale_factor,
            "crossover_rate": config.de_params.crossover_rate,
            "population_size": config.de_params.population_size,
            "generations": config.de_params.generations,
        },
        "bounds": {
            "lower": config.bounds.lower.tolist(),
            "upper": config.bounds.upper.tolist(),
        },
        "initial_curve": config.initial_curve.tolist(),
        "band_centers": list(config.band_plan.center_frequencies),
        "tracks": [
            {"id": t.id, "path": t.path, "start": t.start, "duration": t.duration}
            for t in config.tracks
        ],
        "target_lufs": config.target_lufs,
        "tap_count": config.tap_count,
        "compensation": config.compensation,
        "evaluation_scale": list(config.evaluation_scale),
    }


def load_config(path: str | Path) -> ExperimentConfig:
    """Load a config file; JSON by extension, YAML otherwise."""
    path = Path(path)
    text = path.read_text()
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(text)
        else:
            data = yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError([f"{path}: cannot parse: {exc}"]) from exc
    return config_from_dict(data)


# --------------------------------------------------------------------------
# Persistence: snapshot save/load
# --------------------------------------------------------------------------

def _population_to_dict(pool: Population) -> dict:
    return {
        "generation": pool.generation,
        "members": [{"id": m.id, "curve": m.curve.tolist()} for m in pool.members],
    }


def _comparison_spec_to_dict(spec: TrialSpec) -> dict:
    return {
        "kind": "comparison",
        "trial_id": spec.trial_id,
        "generation": spec.generation,
        "member_id": spec.member_id,
        "track_id": spec.track_id,
        "reference_is_a": spec.reference_is_a,
        "curve_a": spec.curve_a.tolist(),
        "curve_b": spec.curve_b.tolist(),
    }


def _evaluation_spec_to_dict(spec: EvaluationTrialSpec) -> dict:
    return {
        "kind": "evaluation",
        "trial_id": spec.trial_id,
        "track_id": spec.track_id,
        "sources": list(spec.sources),
        "curves": [c.tolist() for c in spec.curves],
    }


def snapshot_dict(state: SessionState) -> dict:
    """The full session as plain data (the save format)."""
    pending: dict | None
    if state.pending is None:
        pending = None
    elif isinstance(state.pending, TrialSpec):
        pending = _comparison_spec_to_dict(state.pending)
    else:
        pending = _evaluation_spec_to_dict(state.pending)
    return {
        "format": SNAPSHOT_FORMAT,
        "version": SNAPSHOT_VERSION,
        "saved_at": _now(),
        "created_at": state.created_at,
        "config": config_to_dict(state.config),
        "config_hash": state.config_hash,
        "stage": state.stage.value,
        "population": _population_to_dict(state.population),
        "history": [_population_to_dict(p) for p in state.history],
        "set_plan": [list(slot) for slot in state.set_plan],
        "set_index": state.set_index,
        "eval_plan": [_evaluation_spec_to_dict(s) for s in state.eval_plan],
        "eval_index": state.eval_index,
        "pending": pending,
        "comparison_records": [
            {
                "trial_id": r.trial_id,
                "generation": r.generation,
                "member_id": r.member_id,
                "track_id": r.track_id,
                "reference_is_a": r.reference_is_a,
                "curve_a": r.curve_a.tolist(),
                "curve_b": r.curve_b.tolist(),
                "rating": r.rating,
                "verdict": r.verdict.value,
            }
            for r in state.comparison_records
        ],
        "evaluation_records": [
            {
                "trial_id": r.trial_id,
                "track_id": r.track_id,
                "sources": list(r.sources),
                "curves": [c.tolist() for c in r.curves],
                "ratings": list(r.ratings),
            }
            for r in state.evaluation_records
        ],
        "rng_state": state.rng_state,
        "best_ranked_id": state.best_ranked_id,
    }


def save(state: SessionState) -> bytes:
    """Serialize the session as human-readable JSON."""
    return (json.dumps(snapshot_dict(state), indent=2, sort_keys=True) + "\n").encode()


class _Reader:
    """Field extraction with error messages that name the failing field."""

    def __init__(self, data: dict, path: str = "snapshot"):
        if not isinstance(data, dict):
            raise SnapshotError(f"{path}: expected a mapping, got {type(data).__name__}")
        self.data = data
        self.path = path

    def get(self, key, kind=None):
        if key not in self.data:
            raise SnapshotError(f"{self.path}.{key}: missing")
        value = self.data[key]
        if kind is not None and not isinstance(value, kind):
            raise SnapshotError(
                f"{self.path}.{key}: expected {getattr(kind, '__name__', kind)}, "
                f"got {type(value).__name__}"
            )
        return value

    def sub(self, key) -> "_Reader":
        return _Reader(self.get(key, dict), f"{self.path}.{key}")


def _curve_from(value, path: str) -> Curve:
    try:
        return Curve(np.array([float(x) for x in value], dtype=float))
    except (TypeError, ValueError) as exc:
        raise SnapshotError(f"{path}: invalid curve: {exc}") from exc


def _population_from(value, path: str) -> Population:
    r = _Reader(value, path)
    members = []
    for i, m in enumerate(r.get("members", list)):
        mr = _Reader(m, f"{path}.members[{i}]")
        members.append(
            de.Member(str(mr.get("id")), _curve_from(mr.get("curve", list), f"{path}.members[{i}].curve"))
        )
    try:
        return Population(int(r.get("generation", int)), tuple(members))
    except ValueError as exc:
        raise SnapshotError(f"{path}: {exc}") from exc


def _comparison_spec_from(value, path: str) -> TrialSpec:
    r = _Reader(value, path)
    return TrialSpec(
        trial_id=str(r.get("trial_id")),
        generation=int(r.get("generation", int)),
        member_id=str(r.get("member_id")),
        track_id=str(r.get("track_id")),
        reference_is_a=bool(r.get("reference_is_a", bool)),
        curve_a=_curve_from(r.get("curve_a", list), f"{path}.curve_a"),
        curve_b=_curve_from(r.get("curve_b", list), f"{path}.curve_b"),
    )


def _evaluation_spec_from(value, path: str) -> EvaluationTrialSpec:
    r = _Reader(value, path)
    curves = r.get("curves", list)
    return EvaluationTrialSpec(
        trial_id=str(r.get("trial_id")),
        track_id=str(r.get("track_id")),
        sources=tuple(str(s) for s in r.get("sources", list)),
        curves=tuple(_curve_from(c, f"{path}.curves[{i}]") for i, c in enumerate(curves)),
    )


def load(payload: bytes | str) -> SessionState:
    """Reconstruct a session from ``save`` output.

    Corruption raises ``SnapshotError`` naming the first failing field.
    """
    if isinstance(payload, bytes):
        payload = payload.decode(errors="replace")
    try:
        data = json.loads(payload)
    except json.JSONDecodeError as exc:
        raise SnapshotError(f"snapshot: not valid JSON: {exc}") from exc
    r = _Reader(data)
    fmt = r.get("format")
    if fmt != SNAPSHOT_FORMAT:
        raise SnapshotError(f"snapshot.format: expected {SNAPSHOT_FORMAT!r}, got {fmt!r}")
    version = r.get("version", int)
    if version != SNAPSHOT_VERSION:
        raise SnapshotError(f"snapshot.version: unsupported version {version}")
    try:
        config = config_from_dict(r.get("config", dict))
    except ConfigError as exc:
        raise SnapshotError(f"snapshot.config: {exc}") from exc

    stage_raw = r.get("stage", str)
    try:
        stage = Stage(stage_raw)
    except ValueError as exc:
        raise SnapshotError(f"snapshot.stage: unknown stage {stage_raw!r}") from exc

    pending_raw = r.get("pending")
    pending: TrialSpec | EvaluationTrialSpec | None
    if pending_raw is None:
        pending = None
    else:
        kind = _Reader(pending_raw, "snapshot.pending").get("kind")
        if kind == "comparison":
            pending = _comparison_spec_from(pending_raw, "snapshot.pending")
        elif kind == "evaluation":
            pending = _evaluation_spec_from(pending_raw, "snapshot.pending")
        else:
            raise SnapshotError(f"snapshot.pending.kind: unknown kind {kind!r}")

    comparison_records = []
    for i, rec in enumerate(r.get("comparison_records", list)):
        rr = _Reader(rec, f"snapshot.comparison_records[{i}]")
        try:
            verdict = Verdict(rr.get("verdict", str))
        except ValueError as exc:
            raise SnapshotError(f"{rr.path}.verdict: {exc}") from exc
        comparison_records.append(
            ComparisonRecord(
                trial_id=str(rr.get("trial_id")),
                generation=int(rr.get("generation", int)),
                member_id=str(rr.get("member_id")),
                track_id=str(rr.get("track_id")),
                reference_is_a=bool(rr.get("reference_is_a", bool)),
                curve_a=_curve_from(rr.get("curve_a", list), f"{rr.path}.curve_a"),
                curve_b=_curve_from(rr.get("curve_b", list), f"{rr.path}.curve_b"),
                rating=float(rr.get("rating", (int, float))),
                verdict=verdict,
            )
        )
    evaluation_records = []
    for i, rec in enumerate(r.get("evaluation_records", list)):
        rr = _Reader(rec, f"snapshot.evaluation_records[{i}]")
        evaluation_records.append(
            EvaluationRecord(
                trial_id=str(rr.get("trial_id")),
                track_id=str(rr.get("track_id")),
                sources=tuple(str(s) for s in rr.get("sources", list)),
                curves=tuple(
                    _curve_from(c, f"{rr.path}.curves[{j}]")
                    for j, c in enumerate(rr.get("curves", list))
                ),
                ratings=tuple(float(x) for x in rr.get("ratings", list)),
            )
        )

    rng_state = r.get("rng_state", dict)
    try:
        _rng_from_state(rng_state)  # validates the structure numpy expects
    except (KeyError, TypeError, ValueError) as exc:
        raise SnapshotError(f"snapshot.rng_state: {exc}") from exc

    best = r.get("best_ranked_id")
    try:
        return SessionState(
            config=config,
            config_hash=str(r.get("config_hash")),
            created_at=str(r.get("created_at")),
            stage=stage,
            population=_population_from(r.get("population", dict), "snapshot.population"),
            history=tuple(
                _population_from(p, f"snapshot.history[{i}]")
                for i, p in enumerate(r.get("history", list))
            ),
            set_plan=tuple(
                (str(m), str(t)) for m, t in r.get("set_plan", list)
            ),
            set_index=int(r.get("set_index", int)),
            eval_plan=tuple(
                _evaluation_spec_from(s, f"snapshot.eval_plan[{i}]")
                for i, s in enumerate(r.get("eval_plan", list))
            ),
            eval_index=int(r.get("eval_index", int)),
            pending=pending,
            comparison_records=tuple(comparison_records),
            evaluation_records=tuple(evaluation_records),
            rng_state=rng_state,
            best_ranked_id=(str(best) if best is not None else None),
        )
    except (TypeError, ValueError) as exc:
        raise SnapshotError(f"snapshot: inconsistent state: {exc}") from exc


# --------------------------------------------------------------------------
# Event log and replay
# --------------------------------------------------------------------------

def _comparison_event(r: ComparisonRecord) -> dict:
    return {
        "type": "comparison",
        "trial_id": r.trial_id,
        "generation": r.generation,
        "member_id": r.member_id,
        "track_id": r.track_id,
        "reference_is_a": r.reference_is_a,
        "curve_a": r.curve_a.tolist(),
        "curve_b": r.curve_b.tolist(),
        "rating": r.rating,
        "verdict": r.verdict.value,
    }


def _evaluation_event(r: EvaluationRecord) -> dict:
    return {
        "type": "evaluation",
        "trial_id": r.trial_id,
        "track_id": r.track_id,
        "sources": list(r.sources),
        "curves": [c.tolist() for c in r.curves],
        "ratings": list(r.ratings),
    }


def _event_dicts(state: SessionState) -> list[dict]:
    events: list[dict] = [_comparison_event(r) for r in state.comparison_records]
    events.extend(_evaluation_event(r) for r in state.evaluation_records)
    return events


def event_lines(state: SessionState) -> list[str]:
    """The append-only trial log: one JSON object per completed trial.

    Deliberately timestamp-free so interrupted and uninterrupted runs of
    the same session produce byte-identical logs.
    """
    return [
        json.dumps(e, sort_keys=True, separators=(",", ":")) for e in _event_dicts(state)
    ]


def replay(config: ExperimentConfig, lines: Iterable[str]) -> SessionState:
    """Rebuild a session by re-running its event log from the config.

    Only the recorded ratings are fed back in; everything else is
    re-derived, and any mismatch with the recorded schedule is an error.
    """
    state = create_session(config)
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            event = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ReplayError(f"event log line {lineno}: not valid JSON: {exc}") from exc
        if not isinstance(event, dict) or "type" not in event:
            raise ReplayError(f"event log line {lineno}: missing event type")
        if state.stage is Stage.DONE:
            raise ReplayError(f"event log line {lineno}: events continue past Done")
        pending = state.pending
        assert pending is not None
        if event.get("trial_id") != pending.trial_id:
            raise ReplayError(
                f"event log line {lineno}: trial {event.get('trial_id')!r} does not "
                f"match the scheduled trial {pending.trial_id!r}"
            )
        try:
            if event["type"] == "comparison":
                state = submit_comparison(state, pending.trial_id, float(event["rating"]))
                applied = _comparison_event(state.comparison_records[-1])
            elif event["type"] == "evaluation":
                state = submit_evaluation(
                    state, pending.trial_id, [float(x) for x in event["ratings"]]
                )
                applied = _evaluation_event(state.evaluation_records[-1])
            else:
                raise ReplayError(
                    f"event log line {lineno}: unknown event type {event['type']!r}"
                )
        except (KeyError, TypeError, ValueError) as exc:
            raise ReplayError(f"event log line {lineno}: {exc!r}") from exc
        if event != applied:
            fields = sorted(
                key
                for key in set(event) | set(applied)
                if event.get(key) != applied.get(key)
            )
            raise ReplayError(
                f"event log line {lineno}: recorded {', '.join(fields)} disagree "
                f"with the replayed schedule"
            )
    return state
