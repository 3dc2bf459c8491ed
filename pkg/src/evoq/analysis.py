"""Convergence and preference measures over completed session logs.

Two measures are computed. The first tracks convergence of the search:
the per-band sample standard deviation of the population pool at each
generation, per session and averaged across sessions. The second compares
the best-ranked final curve against the initial curve from post-session
benchmark ratings: mean ratings, paired wins, and the odds that the
best-ranked curve is preferred, with an exact binomial interval.

Everything here is a pure batch computation over immutable records, so
callers may parallelize across sessions.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import beta

from .de import Population
from .dsp.filters import DEFAULT_OCTAVE_CENTERS
from .session import EvaluationRecord, SessionState, load

SYSTEM_INITIAL = "initial"
SYSTEM_BEST = "best_ranked"

_CONFIDENCE = 0.95


class AnalysisError(ValueError):
    """Input records do not support the requested computation."""


@dataclass(frozen=True)
class BenchmarkRecord:
    """One absolute rating of a named system on one track."""

    track_id: str
    system: str
    rating: float

    def __post_init__(self):
        if self.system not in (SYSTEM_INITIAL, SYSTEM_BEST):
            raise ValueError(
                f"system must be {SYSTEM_INITIAL!r} or {SYSTEM_BEST!r}, got {self.system!r}"
            )
        if not math.isfinite(self.rating):
            raise ValueError("rating must be finite")


@dataclass(frozen=True)
class ConvergenceTable:
    """Per-generation, per-band population standard deviations (dB)."""

    band_centers: tuple[float, ...]
    per_band: np.ndarray  # shape (generations + 1, bands)

    def __post_init__(self):
        table = np.asarray(self.per_band, dtype=float)
        if table.ndim != 2 or table.shape[1] != len(self.band_centers):
            raise ValueError(
                f"table shape {table.shape} does not match {len(self.band_centers)} bands"
            )
        if np.any(table < 0) or not np.all(np.isfinite(table)):
            raise ValueError("standard deviations must be finite and non-negative")
        table = table.copy()
        table.setflags(write=False)
        object.__setattr__(self, "per_band", table)
        object.__setattr__(self, "band_centers", tuple(float(f) for f in self.band_centers))

    @property
    def generations(self) -> int:
        """Number of generation rows (final generation index + 1)."""
        return int(self.per_band.shape[0])

    @property
    def band_averaged(self) -> np.ndarray:
        """Mean over bands at each generation."""
        return self.per_band.mean(axis=1)


def population_sd(
    history: Sequence[Population], band_centers: Sequence[float] | None = None
) -> ConvergenceTable:
    """Sample (n-1) standard deviation of the pool, per generation and band."""
    if not history:
        raise AnalysisError("population history is empty")
    for i, pool in enumerate(history):
        if pool.generation != i:
            raise AnalysisError(
                f"history generations must be contiguous from 0; "
                f"position {i} holds generation {pool.generation}"
            )
        if len(pool) < 2:
            raise AnalysisError("standard deviation needs at least two members")
    rows = np.stack([np.std(pool.curves(), axis=0, ddof=1) for pool in history])
    if band_centers is None:
        band_centers = DEFAULT_OCTAVE_CENTERS[: rows.shape[1]]
    return ConvergenceTable(tuple(band_centers), rows)


def mean_table(tables: Sequence[ConvergenceTable]) -> ConvergenceTable:
    """Average convergence tables across sessions, element-wise."""
    if not tables:
        raise AnalysisError("no convergence tables to average")
    first = tables[0]
    for t in tables[1:]:
        if t.per_band.shape != first.per_band.shape or t.band_centers != first.band_centers:
            raise AnalysisError("convergence tables differ in shape; cannot average")
    return ConvergenceTable(
        first.band_centers, np.mean([t.per_band for t in tables], axis=0)
    )


@dataclass(frozen=True)
class PreferenceSummary:
    """Best-ranked vs. initial: means, paired wins, odds of preference."""

    mean_initial: float
    sd_initial: float
    mean_best: float
    sd_best: float
    wins: int
    losses: int
    ties: int
    win_proportion: float
    odds_ratio: float
    ci_low: float
    ci_high: float
    per_source_means: dict[str, float]


def _odds(p: float) -> float:
    if p >= 1.0:
        return math.inf
    return p / (1.0 - p)


def preference_summary(
    evaluation_records: Sequence[EvaluationRecord],
    benchmark_records: Sequence[BenchmarkRecord],
) -> PreferenceSummary:
    """Summarize the benchmark comparison of best-ranked vs. initial.

    Paired wins are counted per (track, occurrence) pair; the odds ratio is
    wins/losses with ties excluded (all ties -> 1.0), and the interval is
    an exact (Clopper-Pearson) 95% binomial interval on the win proportion,
    transformed to odds. ``evaluation_records`` contribute the per-source
    mean ratings of the final screens for context.
    """
    initial = [r.rating for r in benchmark_records if r.system == SYSTEM_INITIAL]
    best = [r.rating for r in benchmark_records if r.system == SYSTEM_BEST]
    if not initial or not best:
        missing = SYSTEM_INITIAL if not initial else SYSTEM_BEST
        raise AnalysisError(f"benchmark records contain no {missing!r} ratings")

    # Pair records in arrival order within each track.
    by_track: dict[str, dict[str, list[float]]] = {}
    for r in benchmark_records:
        by_track.setdefault(r.track_id, {}).setdefault(r.system, []).append(r.rating)
    wins = losses = ties = 0
    for systems in by_track.values():
        for a, b in zip(systems.get(SYSTEM_INITIAL, []), systems.get(SYSTEM_BEST, [])):
            if b > a:
                wins += 1
            elif b < a:
                losses += 1
            else:
                ties += 1

    decisive = wins + losses
    if decisive == 0:
        win_proportion, odds_ratio = 0.5, 1.0
        ci_low, ci_high = 0.0, math.inf
    else:
        win_proportion = wins / decisive
        odds_ratio = math.inf if losses == 0 else wins / losses
        alpha = 1.0 - _CONFIDENCE
        p_low = 0.0 if wins == 0 else float(beta.ppf(alpha / 2, wins, losses + 1))
        p_high = 1.0 if losses == 0 else float(beta.ppf(1 - alpha / 2, wins + 1, losses))
        ci_low, ci_high = _odds(p_low), _odds(p_high)

    per_source: dict[str, list[float]] = {}
    for record in evaluation_records:
        for source, value in zip(record.sources, record.ratings):
            per_source.setdefault(source, []).append(value)

    return PreferenceSummary(
        mean_initial=float(np.mean(initial)),
        sd_initial=float(np.std(initial, ddof=1)) if len(initial) > 1 else 0.0,
        mean_best=float(np.mean(best)),
        sd_best=float(np.std(best, ddof=1)) if len(best) > 1 else 0.0,
        wins=wins,
        losses=losses,
        ties=ties,
        win_proportion=float(win_proportion),
        odds_ratio=float(odds_ratio),
        ci_low=float(ci_low),
        ci_high=float(ci_high),
        per_source_means={k: float(np.mean(v)) for k, v in sorted(per_source.items())},
    )


# --------------------------------------------------------------------------
# Loading session directories
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LoadedSession:
    """A session directory pulled back into memory."""

    name: str
    state: SessionState
    benchmark: tuple[BenchmarkRecord, ...]


def load_session_dir(path: str | Path) -> LoadedSession:
    path = Path(path)
    snapshot = path / "snapshot.json"
    if not snapshot.is_file():
        raise AnalysisError(f"{path}: no snapshot.json found")
    state = load(snapshot.read_bytes())
    benchmark: list[BenchmarkRecord] = []
    bench_path = path / "benchmark.jsonl"
    if bench_path.is_file():
        for lineno, line in enumerate(bench_path.read_text().splitlines(), start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                benchmark.append(
                    BenchmarkRecord(
                        track_id=str(raw["track_id"]),
                        system=str(raw["system"]),
                        rating=float(raw["rating"]),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise AnalysisError(f"{bench_path}:{lineno}: {exc!r}") from exc
    return LoadedSession(path.name, state, tuple(benchmark))


def load_sessions(root: str | Path) -> list[LoadedSession]:
    """Load every session directory (any subdirectory holding a snapshot)."""
    root = Path(root)
    if not root.is_dir():
        raise AnalysisError(f"{root}: not a directory")
    found = sorted(p for p in root.iterdir() if (p / "snapshot.json").is_file())
    if (root / "snapshot.json").is_file():
        found.insert(0, root)
    if not found:
        raise AnalysisError(f"{root}: no session directories with snapshot.json")
    return [load_session_dir(p) for p in found]


# --------------------------------------------------------------------------
# Tabular exports
# --------------------------------------------------------------------------

def write_convergence_csv(
    sessions: Mapping[str, ConvergenceTable], path: str | Path
) -> None:
    """Long-format table keyed by (session, generation, band)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["session", "generation", "band_hz", "sd_db"])
        for name, table in sessions.items():
            for g in range(table.generations):
                for b, center in enumerate(table.band_centers):
                    writer.writerow([name, g, f"{center:g}", repr(float(table.per_band[g, b]))])


def write_convergence_summary_csv(table: ConvergenceTable, path: str | Path) -> None:
    """Across-session mean: one row per generation, one column per band."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["generation", "band_avg_sd_db"] + [f"sd_{c:g}hz_db" for c in table.band_centers]
        )
        for g in range(table.generations):
            writer.writerow(
                [g, repr(float(table.band_averaged[g]))]
                + [repr(float(x)) for x in table.per_band[g]]
            )


def write_convergence_series(table: ConvergenceTable, path: str | Path) -> None:
    """Plot-ready two-column series: generation, band-averaged std dev."""
    lines = ["# generation  band_averaged_sd_db"]
    for g in range(table.generations):
        lines.append(f"{g}  {float(table.band_averaged[g])!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_preference_csv(summary: PreferenceSummary, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["measure", "value"])
        for key in (
            "mean_initial",
            "sd_initial",
            "mean_best",
            "sd_best",
            "wins",
            "losses",
            "ties",
            "win_proportion",
            "odds_ratio",
            "ci_low",
            "ci_high",
        ):
            writer.writerow([key, repr(getattr(summary, key))])
        for source, value in summary.per_source_means.items():
            writer.writerow([f"mean_rating[{source}]", repr(value)])
