"""Convergence norm, recurrence class and invariant vectors of the mean matrix.

The mean progeny matrix ``M`` of the age-typed process has first column
``m q_i`` and superdiagonal ``q_i``.  Its convergence radius ``gamma`` and
norm ``rho = 1/gamma`` are characterised through

    F(s) = m * sum_{j>=1} Q_j s**j      and      B(s) = (1 + m s g(s)) / (1 + m).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import optimize

from gwlife.distributions import LifetimeModel, OffspringModel

CRITICAL_TOL = 1e-12
ROOT_TOL = 1e-12
ROOT_MAXITER = 200
B_BRACKET_TOP = 1.0 - 1e-9
RADIUS_APPROACH_STEPS = 60


class IndeterminateError(ArithmeticError):
    """The model cannot be classified reliably at working precision."""


class NoInvariantSystem(ValueError):
    """No gamma-invariant vector/measure exists (convergence radius on the boundary)."""


class GrowthUndefined(ValueError):
    pass


class TheoremCase(str, Enum):
    SUBCRITICAL_ROOT = "SubcriticalRoot"
    SUBCRITICAL_BOUNDARY = "SubcriticalBoundary"
    CRITICAL = "Critical"
    SUPERCRITICAL = "Supercritical"


class Criticality(str, Enum):
    SUBCRITICAL = "Subcritical"
    CRITICAL = "Critical"
    SUPERCRITICAL = "Supercritical"


class Recurrence(str, Enum):
    TRANSIENT = "Transient"
    POSITIVE = "PositiveRecurrent"
    NULL = "NullRecurrent"


def criticality(off: OffspringModel, life: LifetimeModel) -> Criticality:
    ml = off.mean * life.mean
    if not math.isfinite(ml):
        raise IndeterminateError(f"m*l = {ml!r} cannot be compared with 1")
    if abs(ml - 1.0) <= CRITICAL_TOL:
        return Criticality.CRITICAL
    return Criticality.SUPERCRITICAL if ml > 1.0 else Criticality.SUBCRITICAL


# ---------------------------------------------------------------------------
# F and B


def F_eval(life: LifetimeModel, m: float, s: float) -> float:
    """``F(s) = m sum_{j>=1} Q_j s**j``; ``math.inf`` where the series diverges."""
    if s < 0:
        raise ValueError("F is evaluated on s >= 0")
    if s == 0:
        return 0.0
    if s == 1.0:
        return m * life.mean
    return m * life.survival_series(s).value


@dataclass(frozen=True)
class BoundaryValue:
    """``F`` at the radius ``R`` with a bound on the unsummed remainder."""

    value: float
    tail: float
    at_least_one: bool


def F_at_radius(life: LifetimeModel, m: float) -> BoundaryValue:
    """Evaluate ``F(R)`` (as the limit ``s -> R-``).

    The boundary series is summed directly with a certified remainder bound.
    When that bound is too loose to decide ``F(R) >= 1``, the monotone
    sequence ``F(R (1 - 2**-i))`` supplies lower bounds.
    """
    value, tail = _boundary_value(life, m)
    R = life.radius
    if math.isinf(value):
        return BoundaryValue(value, tail, True)
    if value >= 1.0:
        return BoundaryValue(value, tail, True)
    if value + tail < 1.0:
        return BoundaryValue(value, tail, False)
    for i in range(1, RADIUS_APPROACH_STEPS + 1):
        s = R * (1.0 - 2.0**-i)
        lower = F_eval(life, m, s)
        if lower >= 1.0:
            return BoundaryValue(value, tail, True)
        if 2.0**i > 1e6:
            break
    raise IndeterminateError(f"cannot decide whether F(R) = {value:.6g} (+{tail:.2g}) reaches 1")


def _boundary_value(life: LifetimeModel, m: float) -> tuple[float, float]:
    R = life.radius
    if math.isinf(R):
        # F is a polynomial (or entire) with a positive linear coefficient
        return math.inf, 0.0
    if R == 1.0:
        return m * life.mean, 0.0
    cache = life.__dict__.setdefault("_boundary_cache", {})
    if "F" not in cache:
        cache["F"] = life.survival_series(R)
    series = cache["F"]
    return m * series.value, m * series.tail


def b_pgf(off: OffspringModel, life: LifetimeModel, s: float) -> float:
    """Auxiliary pgf ``B(s) = (1 + m s g(s)) / (1 + m)`` on ``[0, 1]``."""
    if not 0.0 <= s <= 1.0:
        raise ValueError("B is evaluated on [0, 1]")
    m = off.mean
    return (1.0 + m * s * life.pgf(s)) / (1.0 + m)


def b_excess(off: OffspringModel, life: LifetimeModel, s: float) -> float:
    """``B(s) - s``, written as ``((1 - s) - m s (1 - g(s))) / (1 + m)``.

    The direct difference loses all accuracy as ``m l -> 1``, where the root
    of ``B(s) = s`` crowds against ``s = 1``.
    """
    if not 0.0 <= s <= 1.0:
        raise ValueError("B is evaluated on [0, 1]")
    m = off.mean
    return ((1.0 - s) - m * s * life.pgf_complement(s)) / (1.0 + m)


# ---------------------------------------------------------------------------
# convergence radius


@dataclass(frozen=True)
class SpectralReport:
    gamma: float
    rho: float
    case: TheoremCase
    criticality: Criticality
    ml: float
    R: float
    F_at_R: float
    F_at_R_tail: float
    root_residual: float

    def to_dict(self) -> dict:
        from gwlife.io import ext

        return {
            "gamma": ext(self.gamma),
            "rho": self.rho,
            "case": self.case.value,
            "criticality": self.criticality.value,
            "ml": self.ml,
            "R": ext(self.R),
            "F_at_R": ext(self.F_at_R),
            "F_at_R_tail": self.F_at_R_tail,
            "root_residual": self.root_residual,
        }


def _bisect(fn, lo: float, hi: float, tol: float) -> float:
    flo, fhi = fn(lo), fn(hi)
    if not (flo <= 0.0 <= fhi or fhi <= 0.0 <= flo):
        raise IndeterminateError(f"root not bracketed on [{lo!r}, {hi!r}]")
    # a few extra halvings keep reported roots well inside the requested tolerance
    return optimize.bisect(fn, lo, hi, xtol=tol / 1024, rtol=4 * np.finfo(float).eps, maxiter=ROOT_MAXITER)


def convergence_radius(
    off: OffspringModel, life: LifetimeModel, tol: float = ROOT_TOL
) -> SpectralReport:
    """Convergence radius ``gamma`` and norm ``rho`` of the mean matrix."""
    if not 0.0 < tol <= 1e-6:
        raise ValueError("tol must lie in (0, 1e-6]")
    m = off.mean
    ml = m * life.mean
    crit = criticality(off, life)
    R = life.radius

    if crit is not Criticality.SUBCRITICAL:
        F_R, F_R_tail = _boundary_value(life, m)

    if crit is Criticality.CRITICAL:
        return SpectralReport(1.0, 1.0, TheoremCase.CRITICAL, crit, ml, R,
                              F_R, F_R_tail, abs(ml - 1.0))

    if crit is Criticality.SUPERCRITICAL:
        h = lambda s: b_excess(off, life, s)
        if h(B_BRACKET_TOP) >= 0.0:
            raise IndeterminateError("B(s) = s has no root below 1 - 1e-9; m*l too close to 1")
        gamma = _bisect(h, 0.0, B_BRACKET_TOP, tol)
        return SpectralReport(gamma, 1.0 / gamma, TheoremCase.SUPERCRITICAL, crit, ml, R,
                              F_R, F_R_tail, abs(h(gamma)))

    boundary = F_at_radius(life, m)
    if not boundary.at_least_one:
        return SpectralReport(R, 1.0 / R, TheoremCase.SUBCRITICAL_BOUNDARY, crit, ml, R,
                              boundary.value, boundary.tail, abs(boundary.value - 1.0))

    lo, hi = _root_bracket(life, m, boundary)
    fn = lambda s: F_eval(life, m, s) - 1.0
    gamma = _bisect(fn, lo, hi, tol)
    return SpectralReport(gamma, 1.0 / gamma, TheoremCase.SUBCRITICAL_ROOT, crit, ml, R,
                          boundary.value, boundary.tail, abs(fn(gamma)))


def _root_bracket(life: LifetimeModel, m: float, boundary: BoundaryValue) -> tuple[float, float]:
    R = life.radius
    lo = 1.0
    if math.isinf(R):
        hi = 2.0
        while F_eval(life, m, hi) < 1.0:
            lo, hi = hi, 2.0 * hi
        return lo, hi
    if math.isfinite(boundary.value):
        return lo, R
    for i in range(1, RADIUS_APPROACH_STEPS + 1):
        s = R * (1.0 - 2.0**-i)
        if s <= lo:
            continue
        if F_eval(life, m, s) >= 1.0:
            return lo, s
        lo = s
    raise IndeterminateError("F(s) = 1 has no root resolvable below R")


# ---------------------------------------------------------------------------
# recurrence


@dataclass(frozen=True)
class RecurrenceClass:
    kind: Recurrence
    clause: str
    ml: float
    F_at_R: float | None
    g_second: float

    def to_dict(self) -> dict:
        from gwlife.io import ext

        return {
            "class": self.kind.value,
            "clause": self.clause,
            "evidence": {
                "ml": self.ml,
                "F_at_R": None if self.F_at_R is None else ext(self.F_at_R),
                "g_second_factorial": ext(self.g_second),
            },
        }


def classify(off: OffspringModel, life: LifetimeModel) -> RecurrenceClass:
    """Transient / positive recurrent / null recurrent, with the deciding clause."""
    m = off.mean
    ml = m * life.mean
    crit = criticality(off, life)
    g2 = life.second_factorial
    if crit is Criticality.SUPERCRITICAL:
        return RecurrenceClass(Recurrence.POSITIVE, "ml>1", ml, None, g2)
    if crit is Criticality.CRITICAL:
        if math.isnan(g2):
            raise IndeterminateError("g''(1) could not be resolved")
        if math.isinf(g2):
            return RecurrenceClass(Recurrence.NULL, "ml=1 and g''(1)=inf", ml, None, g2)
        return RecurrenceClass(Recurrence.POSITIVE, "ml=1 and g''(1)<inf", ml, None, g2)
    boundary = F_at_radius(life, m)
    if boundary.at_least_one:
        return RecurrenceClass(Recurrence.POSITIVE, "ml<1 and F(R)>=1", ml, boundary.value, g2)
    return RecurrenceClass(Recurrence.TRANSIENT, "ml<1 and F(R)<1", ml, boundary.value, g2)


# ---------------------------------------------------------------------------
# invariant vector / measure


@dataclass(frozen=True)
class InvariantSystem:
    K: int
    gamma: float
    m: float
    u: np.ndarray  # u[0] is the first component
    v: np.ndarray
    S: float
    S_tail: float
    vu: float
    vu_tail: float
    growth_constant: float | None
    paper_constant: float | None

    def to_dict(self, components: int = 10) -> dict:
        from gwlife.io import ext

        return {
            "K": self.K,
            "gamma": self.gamma,
            "u_head": [float(x) for x in self.u[:components]],
            "v_head": [float(x) for x in self.v[:components]],
            "S": ext(self.S),
            "S_tail": self.S_tail,
            "vu": ext(self.vu),
            "vu_tail": self.vu_tail,
            "growth_constant": None if self.growth_constant is None else ext(self.growth_constant),
            "unnormalized_constant": None if self.paper_constant is None else ext(self.paper_constant),
        }


def _sum_S(off: OffspringModel, life: LifetimeModel, gamma: float) -> tuple[float, float]:
    """``S = m sum_{j>=2} (j-1) Q_j gamma**j`` and its remainder bound."""
    m = off.mean
    series = life.survival_series(gamma, offset=1)
    return m * series.value, m * series.tail


def invariant_system(
    off: OffspringModel, life: LifetimeModel, K: int, report: SpectralReport | None = None
) -> InvariantSystem:
    """Truncated gamma-invariant vector ``u`` and measure ``v`` (``u_1 = v_1 = 1``)."""
    if report is None:
        report = convergence_radius(off, life)
    if report.case is TheoremCase.SUBCRITICAL_BOUNDARY:
        raise NoInvariantSystem("gamma = R: no gamma-invariant vector or measure exists")
    if K < 2:
        raise ValueError("K must be at least 2")
    log_Q = life.log_survival(np.arange(K + 1))
    if not np.isfinite(log_Q[K - 1]):
        raise ValueError(f"Q_{K - 1} = 0: types beyond the lifetime support requested")

    m = off.mean
    gamma = report.gamma
    log_g = math.log(gamma)
    j = np.arange(1, K + 1)
    log_t = math.log(m) + log_Q[1:] + j * log_g  # t_j = m Q_j gamma**j
    beyond = life.survival_series(gamma, start=K + 1)
    log_beyond = math.log(m * beyond.value) if beyond.value > 0 else -np.inf
    # T_k = sum_{j>=k} t_j, accumulated backwards in log space
    rev = np.concatenate([[log_beyond], log_t[::-1]])
    log_T = np.logaddexp.accumulate(rev)[::-1][:-1]  # log T_1 .. log T_K

    k = np.arange(1, K + 1)
    log_u = log_T - (k - 1) * log_g - log_Q[:-1]
    u = np.exp(log_u)
    u[0] = 1.0
    v = np.exp(log_Q[:-1] + (k - 1) * log_g)

    S, S_tail = _sum_S(off, life, gamma)
    rest = life.survival_series(gamma, start=K + 1, offset=K)
    vu = 1.0 + math.fsum(np.exp(log_T[1:])) + m * rest.value
    vu_tail = m * rest.tail
    if math.isfinite(S) and math.isfinite(off.second_factorial):
        growth = (1.0 + 1.0 / m) / (1.0 + S)
    else:
        growth = None
    paper = (1.0 + 1.0 / m) / S if S > 0 else math.inf
    return InvariantSystem(K, gamma, m, u, v, S, S_tail, vu, vu_tail, growth, paper)


@dataclass(frozen=True)
class InvariantResiduals:
    vector: float  # max relative residual of gamma M u = u over interior rows
    measure: float  # max relative residual of gamma v M = v over interior columns
    first_measure: float  # |gamma m sum_i v_i q_i + tail - v_1|
    vu_vs_S: float  # |vu - (1 + S)|


def invariant_residuals(
    off: OffspringModel, life: LifetimeModel, system: InvariantSystem
) -> InvariantResiduals:
    K, gamma, m = system.K, system.gamma, off.mean
    u, v = system.u, system.v
    q = life.hazard(np.arange(1, K + 1))  # q[i-1] = q_i
    rows = np.arange(2, K)  # 2 <= k <= K-1
    lhs = gamma * (m * q[rows - 1] * u[0] + q[rows - 1] * u[rows])
    vec = float(np.max(np.abs(lhs - u[rows - 1]) / u[rows - 1])) if rows.size else 0.0
    cols = np.arange(2, K + 1)
    lhs_v = gamma * v[cols - 2] * q[cols - 2]
    meas = float(np.max(np.abs(lhs_v - v[cols - 1]) / v[cols - 1]))
    tail = m * life.survival_series(gamma, start=K + 1).value
    first = abs(gamma * m * math.fsum(v * q) + tail - v[0])
    if math.isfinite(system.vu) and math.isfinite(system.S):
        vu_gap = abs(system.vu - (1.0 + system.S))
    else:
        vu_gap = 0.0 if system.vu == system.S else math.inf
    return InvariantResiduals(vec, meas, first, vu_gap)


def lifetime_slope(off: OffspringModel, life: LifetimeModel, s: float) -> float:
    """``m g'(s)``, compared against 1 at a root ``gamma > 1`` of ``F(s) = 1``."""
    return off.mean * life.pgf(s, 1)


def growth_constant(off: OffspringModel, life: LifetimeModel) -> float:
    """``lim rho**-n E(1 . Z_n)`` for a newborn ancestor, as ``(1 + 1/m) / (1 + S)``."""
    cls = classify(off, life)
    if cls.kind is not Recurrence.POSITIVE:
        raise GrowthUndefined(f"process is {cls.kind.value}, not positive recurrent")
    if math.isinf(off.second_factorial):
        raise GrowthUndefined("f''(1) is infinite")
    report = convergence_radius(off, life)
    S, _ = _sum_S(off, life, report.gamma)
    if math.isinf(S):
        raise GrowthUndefined("S is infinite")
    m = off.mean
    return (1.0 + 1.0 / m) / (1.0 + S)
