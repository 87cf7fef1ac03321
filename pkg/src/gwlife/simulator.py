"""Monte Carlo simulation of the age-structured population.

The state is the vector of age counts ``Z_n``; entry ``a`` counts
individuals of age ``a`` (type ``a + 1``).  In one season every age-``a``
individual survives with probability ``q_{a+1}``; survivors age by one and
each produces an offspring count from the offspring law.  Individuals that
die produce nothing that season.

Each replicate draws from its own Philox stream derived from
``(master_seed, replicate)``, and summaries accumulate integers only, so
results do not depend on how replicates are split across workers.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from gwlife.distributions import LifetimeModel, OffspringModel

Z_95 = 1.96
_EMPTY = np.zeros(0, dtype=np.int64)


class Status(str, Enum):
    EXTINCT = "Extinct"
    CAPPED = "Capped"
    RAN_OUT = "RanOut"


@dataclass(frozen=True)
class SimConfig:
    replicates: int
    max_generations: int
    master_seed: int
    population_cap: int = 10**6

    def __post_init__(self):
        if int(self.replicates) < 1:
            raise ValueError("replicates must be at least 1")
        if int(self.max_generations) < 1:
            raise ValueError("max_generations must be at least 1")
        if int(self.population_cap) <= 0:
            raise ValueError("population_cap must be positive")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        return {
            "replicates": int(self.replicates),
            "max_generations": int(self.max_generations),
            "master_seed": int(self.master_seed),
            "population_cap": int(self.population_cap),
        }


def replicate_rng(master_seed: int, replicate: int) -> np.random.Generator:
    """Independent counter-based stream for one replicate."""
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(replicate),))
    return np.random.Generator(np.random.Philox(seq))


def hazard_table(life: LifetimeModel, ages: int) -> np.ndarray:
    """``q_{a+1}`` for ages ``a = 0 .. ages - 1``."""
    return life.hazard(np.arange(1, ages + 1))


def _advance(
    state: np.ndarray, haz: np.ndarray, off: OffspringModel, rng: np.random.Generator
) -> tuple[np.ndarray, int]:
    """Next state and its total; trailing empty ages are dropped."""
    survivors = rng.binomial(state, haz[: state.size])
    alive = int(survivors.sum())
    if alive == 0:
        return _EMPTY, 0
    born = off.sample_total(rng, alive)
    k = state.size
    while survivors[k - 1] == 0:
        k -= 1
    nxt = np.empty(k + 1, dtype=np.int64)
    nxt[0] = born
    nxt[1:] = survivors[:k]
    return nxt, alive + born


def step(
    state: Sequence[int] | np.ndarray,
    off: OffspringModel,
    life: LifetimeModel,
    rng: np.random.Generator,
) -> np.ndarray:
    """One season.  Trailing empty ages are dropped; extinction is the empty vector."""
    state = np.asarray(state, dtype=np.int64)
    if np.any(state < 0):
        raise ValueError("age counts must be nonnegative")
    if not state.any():
        return _EMPTY.copy()
    return _advance(state, hazard_table(life, state.size), off, rng)[0]


@dataclass
class Trajectory:
    replicate: int
    states: list[np.ndarray]  # Z_0 .. Z_n
    status: Status
    end: int  # generation of extinction or capping, else the horizon

    @property
    def totals(self) -> list[int]:
        return [int(z.sum()) for z in self.states]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["generation", "age", "count"])
        for n, z in enumerate(self.states):
            if z.size == 0:
                w.writerow([n, 0, 0])
            for a, c in enumerate(z.tolist()):
                w.writerow([n, a, c])
        return buf.getvalue()


def run_replicate(
    off: OffspringModel,
    life: LifetimeModel,
    cfg: SimConfig,
    replicate: int,
    haz: np.ndarray | None = None,
) -> Trajectory:
    """Full trajectory of one replicate from a single newborn."""
    if haz is None:
        haz = hazard_table(life, cfg.max_generations + 1)
    rng = replicate_rng(cfg.master_seed, replicate)
    state = np.array([1], dtype=np.int64)
    states = [state]
    for n in range(1, cfg.max_generations + 1):
        state, total = _advance(state, haz, off, rng)
        states.append(state)
        if total == 0:
            return Trajectory(replicate, states, Status.EXTINCT, n)
        if total > cfg.population_cap:
            return Trajectory(replicate, states, Status.CAPPED, n)
    return Trajectory(replicate, states, Status.RAN_OUT, cfg.max_generations)


# ---------------------------------------------------------------------------
# aggregation


@dataclass
class Tally:
    """Integer sums over replicates; merging is associative and commutative."""

    generations: tuple[int, ...]
    replicates: int = 0
    extinct: int = 0
    capped: int = 0
    ran_out: int = 0
    # per requested generation: replicates capped before reaching it
    capped_before: dict[int, int] = field(default_factory=dict)
    sum_total: dict[int, int] = field(default_factory=dict)
    sum_total_sq: dict[int, int] = field(default_factory=dict)
    sum_type: dict[int, list[int]] = field(default_factory=dict)
    sum_type_sq: dict[int, list[int]] = field(default_factory=dict)

    def __post_init__(self):
        for n in self.generations:
            self.capped_before.setdefault(n, 0)
            self.sum_total.setdefault(n, 0)
            self.sum_total_sq.setdefault(n, 0)
            self.sum_type.setdefault(n, [0] * (n + 1))
            self.sum_type_sq.setdefault(n, [0] * (n + 1))

    def record(self, n: int, state: np.ndarray) -> None:
        counts = state.tolist()
        total = sum(counts)
        self.sum_total[n] += total
        self.sum_total_sq[n] += total * total
        st, sq = self.sum_type[n], self.sum_type_sq[n]
        for a, c in enumerate(counts):
            st[a] += c
            sq[a] += c * c

    def merge(self, other: Tally) -> Tally:
        if other.generations != self.generations:
            raise ValueError("cannot merge tallies for different generations")
        out = Tally(self.generations)
        out.replicates = self.replicates + other.replicates
        out.extinct = self.extinct + other.extinct
        out.capped = self.capped + other.capped
        out.ran_out = self.ran_out + other.ran_out
        for n in self.generations:
            out.capped_before[n] = self.capped_before[n] + other.capped_before[n]
            out.sum_total[n] = self.sum_total[n] + other.sum_total[n]
            out.sum_total_sq[n] = self.sum_total_sq[n] + other.sum_total_sq[n]
            out.sum_type[n] = [a + b for a, b in zip(self.sum_type[n], other.sum_type[n])]
            out.sum_type_sq[n] = [a + b for a, b in zip(self.sum_type_sq[n], other.sum_type_sq[n])]
        return out


def _run_range(
    off: OffspringModel,
    life: LifetimeModel,
    cfg: SimConfig,
    generations: tuple[int, ...],
    start: int,
    stop: int,
) -> Tally:
    haz = hazard_table(life, cfg.max_generations + 1)
    tally = Tally(generations)
    wanted = set(generations)
    cap = cfg.population_cap
    horizon = cfg.max_generations
    for rep in range(start, stop):
        rng = replicate_rng(cfg.master_seed, rep)
        state = np.array([1], dtype=np.int64)
        if 0 in wanted:
            tally.record(0, state)
        status = Status.RAN_OUT
        n = 0
        while n < horizon:
            n += 1
            state, total = _advance(state, haz, off, rng)
            if total == 0:
                status = Status.EXTINCT
                break
            if n in wanted:
                tally.record(n, state)
            if total > cap:
                status = Status.CAPPED
                break
        tally.replicates += 1
        if status is Status.EXTINCT:
            tally.extinct += 1
        elif status is Status.CAPPED:
            tally.capped += 1
            for g in generations:
                if g > n:
                    tally.capped_before[g] += 1
        else:
            tally.ran_out += 1
    return tally


def simulate(
    off: OffspringModel,
    life: LifetimeModel,
    cfg: SimConfig,
    generations: Iterable[int] = (),
    workers: int = 1,
) -> Tally:
    """Run all replicates and return the merged integer tally."""
    gens = tuple(sorted({int(g) for g in generations}))
    if any(g < 0 or g > cfg.max_generations for g in gens):
        raise ValueError("requested generations must lie in [0, max_generations]")
    R = int(cfg.replicates)
    workers = max(1, int(workers))
    if workers == 1 or R < 2 * workers:
        return _run_range(off, life, cfg, gens, 0, R)
    bounds = np.linspace(0, R, workers + 1).astype(int)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(
            pool.map(
                _run_range,
                [off] * workers,
                [life] * workers,
                [cfg] * workers,
                [gens] * workers,
                bounds[:-1].tolist(),
                bounds[1:].tolist(),
            )
        )
    out = parts[0]
    for p in parts[1:]:
        out = out.merge(p)
    return out


# ---------------------------------------------------------------------------
# estimators


@dataclass(frozen=True)
class GenerationEstimate:
    n: int
    samples: int  # replicates that reached generation n uncapped
    capped_before: int
    mean_total: float
    se_total: float
    normalized: float | None  # rho**-n * mean_total
    normalized_se: float | None
    mean_per_type: list[float]
    se_per_type: list[float]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "samples": self.samples,
            "capped_before": self.capped_before,
            "mean_total": self.mean_total,
            "se_total": self.se_total,
            "normalized_mean_total": self.normalized,
            "normalized_se": self.normalized_se,
            "mean_per_type": self.mean_per_type,
            "se_per_type": self.se_per_type,
        }


@dataclass(frozen=True)
class SimulationSummary:
    config: SimConfig
    extinct: int
    capped: int
    ran_out: int
    extinction_frequency: float
    half_width: float
    rho: float | None
    generations: list[GenerationEstimate]
    notes: tuple[str, ...] = ()

    @property
    def cap_fraction(self) -> float:
        return self.capped / self.config.replicates

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "extinct": self.extinct,
            "capped": self.capped,
            "ran_out": self.ran_out,
            "extinction_frequency": self.extinction_frequency,
            "ci95_half_width": self.half_width,
            "rho": self.rho,
            "generations": [g.to_dict() for g in self.generations],
            "notes": list(self.notes),
        }


BIAS_NOTES = (
    "replicates still alive at the horizon count as survivors, so a finite horizon under-counts extinction",
    "replicates stopped at the population cap count as survivors, so the cap over-counts survival",
)


def _mean_se(total: int, total_sq: int, n: int) -> tuple[float, float]:
    if n == 0:
        return math.nan, math.nan
    mean = total / n
    if n == 1:
        return mean, math.nan
    # exact integer numerator for the sample variance
    var = (n * total_sq - total * total) / (n * (n - 1))
    return mean, math.sqrt(max(var, 0.0) / n)


def summarize(tally: Tally, cfg: SimConfig, rho: float | None = None) -> SimulationSummary:
    R = tally.replicates
    p = tally.extinct / R
    half = Z_95 * math.sqrt(p * (1.0 - p) / R)
    gens = []
    for n in tally.generations:
        k = R - tally.capped_before[n]
        mean, se = _mean_se(tally.sum_total[n], tally.sum_total_sq[n], k)
        per = [_mean_se(s, q, k) for s, q in zip(tally.sum_type[n], tally.sum_type_sq[n])]
        norm = norm_se = None
        if rho is not None and rho > 0 and math.isfinite(rho):
            scale = rho ** (-n)
            norm, norm_se = mean * scale, se * scale
        gens.append(
            GenerationEstimate(
                n, k, tally.capped_before[n], mean, se, norm, norm_se, [m for m, _ in per], [s for _, s in per]
            )
        )
    notes = BIAS_NOTES
    if any(tally.capped_before[n] for n in tally.generations):
        notes = notes + ("per-generation means exclude replicates capped before that generation",)
    return SimulationSummary(cfg, tally.extinct, tally.capped, tally.ran_out, p, half, rho, gens, notes)


def estimate_extinction(
    off: OffspringModel, life: LifetimeModel, cfg: SimConfig, workers: int = 1
) -> SimulationSummary:
    """Fraction of replicates extinct by the horizon, with a 95% normal interval."""
    return summarize(simulate(off, life, cfg, (), workers), cfg)


def estimate_growth(
    off: OffspringModel,
    life: LifetimeModel,
    cfg: SimConfig,
    generations: Iterable[int],
    rho: float | None = None,
    workers: int = 1,
) -> SimulationSummary:
    """Mean totals and per-type means at ``generations``, normalized by ``rho**n``."""
    if rho is None:
        from gwlife.spectral import convergence_radius

        rho = convergence_radius(off, life).rho
    return summarize(simulate(off, life, cfg, generations, workers), cfg, rho)
