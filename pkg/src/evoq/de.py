"""Differential-evolution operators over bounded per-band gain vectors.

The optimizer evolves "curves": vectors of per-band gains in dB. Candidate
curves are produced by the classic rand/1 scheme — mutation adds a scaled
difference of two donor curves to a third, crossover mixes the mutant with
the reference gene by gene, and the result is clipped to the search bounds.
Selection is driven by an externally supplied preference verdict rather
than a computed objective, so every operator takes an explicit RNG and is
deterministic given its state.

RNG draw order (one generator, single stream):
  * ``init_population``: one uniform block of shape (population, bands),
    member-major.
  * ``step_generation``: member-order permutation, then per member the
    draws of ``propose_trial`` (donor triple, per-gene crossover uniforms).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_BAND_COUNT = 10


class Verdict(Enum):
    """Outcome of one paired preference trial."""

    REFERENCE = "reference"
    TRIAL = "trial"
    TIE = "tie"


@dataclass(frozen=True)
class Curve:
    """One candidate target curve: a gain in dB per frequency band."""

    gains: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gains, dtype=float)
        if g.ndim != 1 or g.size == 0:
            raise ValueError("curve gains must be a non-empty 1-D vector")
        if not np.all(np.isfinite(g)):
            raise ValueError("curve gains must all be finite")
        g = g.copy()
        g.setflags(write=False)
        object.__setattr__(self, "gains", g)

    def __len__(self) -> int:
        return int(self.gains.size)

    def __eq__(self, other) -> bool:
        return isinstance(other, Curve) and np.array_equal(self.gains, other.gains)

    def __hash__(self):
        return hash(self.gains.tobytes())

    def tolist(self) -> list[float]:
        return [float(x) for x in self.gains]


@dataclass(frozen=True)
class Bounds:
    """Per-band lower/upper gain limits defining the search space."""

    lower: Curve
    upper: Curve

    def __post_init__(self):
        if len(self.lower) != len(self.upper):
            raise ValueError("lower and upper bounds differ in band count")
        bad = np.nonzero(self.lower.gains > self.upper.gains)[0]
        if bad.size:
            raise ValueError(f"lower bound exceeds upper bound at band(s) {bad.tolist()}")

    def __len__(self) -> int:
        return len(self.lower)

    def violations(self, curve: Curve) -> list[int]:
        """Indices of bands where ``curve`` falls outside the bounds."""
        g = curve.gains
        bad = (g < self.lower.gains) | (g > self.upper.gains)
        return np.nonzero(bad)[0].tolist()

    def contains(self, curve: Curve) -> bool:
        return not self.violations(curve)

    @classmethod
    def uniform(cls, low: float, high: float, bands: int = DEFAULT_BAND_COUNT) -> "Bounds":
        return cls(Curve(np.full(bands, low)), Curve(np.full(bands, high)))


@dataclass(frozen=True)
class DEParams:
    """Differential-evolution parameters.

    Defaults follow the listening experiment: F=0.2, C=0.7, a pool of five
    individuals evolved through eight generations.
    """

    scale_factor: float = 0.2
    crossover_rate: float = 0.7
    population_size: int = 5
    generations: int = 8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.scale_factor <= 2.0:
            raise ValueError(f"scale factor must be in [0, 2], got {self.scale_factor}")
        if not 0.0 <= self.crossover_rate <= 1.0:
            raise ValueError(f"crossover rate must be in [0, 1], got {self.crossover_rate}")
        if self.population_size < 4:
            raise ValueError(
                "population size must be >= 4 (mutation draws three distinct "
                f"donors besides the target), got {self.population_size}"
            )
        if self.generations < 1:
            raise ValueError(f"generations must be >= 1, got {self.generations}")


@dataclass(frozen=True)
class Member:
    """A population slot: stable identity plus its current curve."""

    id: str
    curve: Curve


@dataclass(frozen=True)
class Population:
    """Generation-indexed pool of candidate curves."""

    generation: int
    members: tuple[Member, ...]

    def __post_init__(self):
        if self.generation < 0:
            raise ValueError("generation must be non-negative")
        ids = [m.id for m in self.members]
        if len(set(ids)) != len(ids):
            raise ValueError("member ids must be unique")

    def __len__(self) -> int:
        return len(self.members)

    def curves(self) -> np.ndarray:
        """Member gains stacked as an array of shape (members, bands)."""
        return np.stack([m.curve.gains for m in self.members])

    def index_of(self, member_id: str) -> int:
        for i, m in enumerate(self.members):
            if m.id == member_id:
                return i
        raise ValueError(f"unknown member id {member_id!r}")

    def member(self, member_id: str) -> Member:
        return self.members[self.index_of(member_id)]

    def with_curve(self, member_id: str, curve: Curve) -> "Population":
        i = self.index_of(member_id)
        members = list(self.members)
        members[i] = Member(member_id, curve)
        return Population(self.generation, tuple(members))


def init_population(
    initial: Curve, bounds: Bounds, params: DEParams, rng: np.random.Generator
) -> Population:
    """Draw a generation-0 pool uniformly within the bounds.

    ``initial`` is the external benchmark curve; it is validated against the
    bounds but is not itself a member of the pool.
    """
    if len(initial) != len(bounds):
        raise ValueError("initial curve and bounds differ in band count")
    bad = bounds.violations(initial)
    if bad:
        detail = ", ".join(
            f"band {i}: {initial.gains[i]:g} not in "
            f"[{bounds.lower.gains[i]:g}, {bounds.upper.gains[i]:g}]"
            for i in bad
        )
        raise ValueError(f"initial curve out of bounds ({detail})")
    n = params.population_size
    block = rng.uniform(bounds.lower.gains, bounds.upper.gains, size=(n, len(bounds)))
    members = tuple(Member(f"m{i}", Curve(block[i])) for i in range(n))
    return Population(0, members)


def mutate(
    population: Population, target_index: int, scale_factor: float, rng: np.random.Generator
) -> Curve:
    """Build a mutant ``a + F * (b - c)`` from three distinct donors.

    Donor positions are drawn uniformly without replacement from the pool
    excluding ``target_index``. The result is not clipped.
    """
    n = len(population)
    if n < 4:
        raise ValueError(f"population of {n} too small to mutate; need >= 4")
    if not 0.0 <= scale_factor <= 2.0:
        raise ValueError(f"scale factor must be in [0, 2], got {scale_factor}")
    if not 0 <= target_index < n:
        raise ValueError(f"target index {target_index} out of range for population of {n}")
    candidates = np.array([i for i in range(n) if i != target_index])
    j, k, l = rng.choice(candidates, size=3, replace=False)
    a = population.members[j].curve.gains
    b = population.members[k].curve.gains
    c = population.members[l].curve.gains
    return Curve(a + scale_factor * (b - c))


def crossover(
    reference: Curve, mutant: Curve, crossover_rate: float, rng: np.random.Generator
) -> Curve:
    """Mix mutant and reference gene by gene.

    Each gene is taken from the mutant when an independent uniform draw
    falls below the crossover rate, otherwise from the reference. No index
    is forced, so the result can degenerate to the reference.
    """
    if len(reference) != len(mutant):
        raise ValueError(
            f"reference has {len(reference)} bands but mutant has {len(mutant)}"
        )
    if not 0.0 <= crossover_rate <= 1.0:
        raise ValueError(f"crossover rate must be in [0, 1], got {crossover_rate}")
    draws = rng.random(len(reference))
    return Curve(np.where(draws < crossover_rate, mutant.gains, reference.gains))


def clip(trial: Curve, bounds: Bounds) -> Curve:
    """Clamp every gene into its [lower, upper] interval."""
    if len(trial) != len(bounds):
        raise ValueError("trial curve and bounds differ in band count")
    return Curve(np.maximum(np.minimum(trial.gains, bounds.upper.gains), bounds.lower.gains))


def propose_trial(
    population: Population,
    target_index: int,
    bounds: Bounds,
    params: DEParams,
    rng: np.random.Generator,
) -> Curve:
    """mutate -> crossover -> clip for one member, in the documented draw order."""
    reference = population.members[target_index].curve
    mutant = mutate(population, target_index, params.scale_factor, rng)
    trial = crossover(reference, mutant, params.crossover_rate, rng)
    return clip(trial, bounds)


def select(
    reference_id: str, trial_curve: Curve, verdict: Verdict, population: Population
) -> Population:
    """Replace the member's curve when the trial won; otherwise keep it.

    Ties conservatively retain the reference.
    """
    population.index_of(reference_id)  # raises on unknown id
    if verdict is Verdict.TRIAL:
        return population.with_curve(reference_id, trial_curve)
    if verdict is Verdict.TIE:
        log.debug("tie on member %s: reference retained", reference_id)
    return population


def step_generation(
    population: Population,
    bounds: Bounds,
    params: DEParams,
    fitness: Callable[[Curve, Curve], Verdict],
    rng: np.random.Generator,
) -> Population:
    """Run one full set of trials: every member is challenged exactly once.

    Members are visited in a freshly shuffled order. Each trial vector is
    proposed from the pool as updated so far, judged by ``fitness(reference,
    challenger)``, and selected immediately, so later trials within the set
    see earlier winners. The returned pool has its generation incremented.
    A fitness failure propagates; the caller's population is untouched.
    """
    order = rng.permutation(len(population))
    pool = population
    for pos in order:
        member = pool.members[int(pos)]
        trial = propose_trial(pool, int(pos), bounds, params, rng)
        verdict = fitness(member.curve, trial)
        if not isinstance(verdict, Verdict):
            raise TypeError(f"fitness must return a Verdict, got {type(verdict).__name__}")
        pool = select(member.id, trial, verdict, pool)
    return Population(pool.generation + 1, pool.members)
