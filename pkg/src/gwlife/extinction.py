"""Extinction probability of the process started from one newborn.

Over its whole life an individual leaves ``sum_{i<L} X_i`` offspring, whose
pgf is ``g(f(s))``.  The extinction probability ``q`` is the smallest root
of ``g(f(s)) = s`` in ``[0, 1]`` and equals 1 exactly when ``m l <= 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from gwlife.distributions import LifetimeModel, OffspringModel
from gwlife.spectral import CRITICAL_TOL

FIXED_POINT_MAXITER = 1_000_000
COMPONENT_DEPTH = 100
COMPONENT_MAX_DEPTH = 1_000_000


@dataclass(frozen=True)
class ComponentwiseVector:
    """Extinction probabilities ``s_i`` starting from one individual of age ``i - 1``.

    They solve ``s_i = 1 - q_i + q_i s_{i+1} f(s_1)`` with ``s_i -> 1``.
    """

    s: np.ndarray  # s_1 .. s_n
    depth: int  # index where the recursion was closed with s = 1
    closure: float  # |s_1 - q|
    residual: float  # max_i |s_i - (1 - q_i + q_i s_{i+1} f(s_1))|

    def to_dict(self, components: int = 10) -> dict:
        return {
            "s": self.s[:components].tolist(),
            "depth": self.depth,
            "closure_residual": self.closure,
            "equation_residual": self.residual,
        }


@dataclass(frozen=True)
class ExtinctionReport:
    q: float
    certain: bool
    residual: float  # |g(f(q)) - q|
    iterations: int
    ml: float

    def to_dict(self) -> dict:
        return {
            "q": self.q,
            "certain": self.certain,
            "residual": self.residual,
            "iterations": self.iterations,
            "ml": self.ml,
        }


def offspring_total_pgf(off: OffspringModel, life: LifetimeModel, s: float) -> float:
    """``g(f(s))``: pgf of an individual's lifetime offspring count."""
    return life.pgf(off.pgf(s))


def is_certain_extinction(off: OffspringModel, life: LifetimeModel) -> bool:
    return off.mean * life.mean <= 1.0 + CRITICAL_TOL


def extinction_probability(
    off: OffspringModel, life: LifetimeModel, tol: float = 1e-12
) -> ExtinctionReport:
    """Smallest root of ``g(f(s)) = s`` on ``[0, 1]``.

    Iterates ``s <- g(f(s))`` from 0, which increases to the root, and then
    polishes the last iterate by bisection, so slow near-critical
    convergence cannot leave the answer short of ``tol``.
    """
    if not 0.0 < tol <= 1e-8:
        raise ValueError("tol must lie in (0, 1e-8]")
    ml = off.mean * life.mean
    if is_certain_extinction(off, life):
        return ExtinctionReport(1.0, True, 0.0, 0, ml)

    def h(s: float) -> float:
        return offspring_total_pgf(off, life, s) - s

    s = 0.0
    it = 0
    while it < FIXED_POINT_MAXITER:
        nxt = offspring_total_pgf(off, life, s)
        it += 1
        step = nxt - s
        s = nxt
        if abs(step) < tol:
            break

    # h > 0 below q and h < 0 on (q, 1); find a point past the root
    lo = s
    if h(lo) <= 0.0:
        q = lo
    else:
        width = max(tol, abs(step))
        hi = min(lo + width, 1.0)
        while h(hi) > 0.0 and hi < 1.0:
            lo = hi
            width *= 2.0
            hi = min(lo + width, 1.0)
        if h(hi) > 0.0:  # cannot happen for ml > 1; guard against rounding at 1
            q = hi
        else:
            q = optimize.bisect(h, lo, hi, xtol=min(tol, 1e-13) / 4, rtol=4 * np.finfo(float).eps, maxiter=500)
    return ExtinctionReport(float(q), False, abs(h(q)), it, ml)


def componentwise_vector(
    off: OffspringModel,
    life: LifetimeModel,
    q: float,
    n: int = COMPONENT_DEPTH,
) -> ComponentwiseVector:
    """Solve the age-indexed extinction equations by backward recursion.

    The forward recursion from ``s_1 = q`` amplifies rounding by
    ``1/(q_i f(q))`` per step; running backward from ``s_N = 1`` contracts
    instead.  ``N`` is chosen so the contraction product drops below
    machine precision.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    fq = off.pgf(q)
    depth = n + 1
    log_eps = math.log(np.finfo(float).eps) - 2.0
    block = max(256, n)
    while True:
        haz = life.hazard(np.arange(1, depth + block + 1))
        with np.errstate(divide="ignore"):
            log_c = np.log(haz * fq)
        cum = np.cumsum(log_c[n:])
        hit = np.flatnonzero(cum < log_eps)
        if hit.size:
            depth = n + int(hit[0]) + 1
            break
        if depth + block >= COMPONENT_MAX_DEPTH:
            depth = depth + block
            break
        depth += block
        block *= 2
    haz = life.hazard(np.arange(1, depth + 1))
    s = np.empty(depth + 1)
    s[depth] = 1.0
    for i in range(depth - 1, -1, -1):
        s[i] = 1.0 - haz[i] + haz[i] * s[i + 1] * fq
    f1 = off.pgf(s[0])
    resid = np.abs(s[:n] - (1.0 - haz[:n] + haz[:n] * s[1 : n + 1] * f1))
    return ComponentwiseVector(s[:n].copy(), depth, abs(s[0] - q), float(resid.max()))
