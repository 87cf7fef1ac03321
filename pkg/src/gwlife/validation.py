"""Cross-checks between independent routes to the same quantity.

Every check reports a status (pass, fail or skip), the observed residual
and the tolerance it was held to, so a failing model can be diagnosed
from the report alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np
from scipy import optimize

from gwlife.distributions import LifetimeModel, OffspringModel
from gwlife.extinction import componentwise_vector, extinction_probability, offspring_total_pgf
from gwlife.simulator import SimConfig, estimate_growth
from gwlife.spectral import (
    F_eval,
    SpectralReport,
    TheoremCase,
    b_pgf,
    convergence_radius,
    invariant_residuals,
    invariant_system,
    lifetime_slope,
)
from gwlife.truncation import Method, expected_population, radius_sequence

TRUNCATION_K = 400
INVARIANT_K = 200
SIM_GENERATIONS = 6
SIM_REPLICATES = 4000
SIM_SEED = 20240601
SIM_SIGMAS = 4.0


class CheckStatus(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    SKIP = "skip"


@dataclass(frozen=True)
class Check:
    name: str
    status: CheckStatus
    residual: float | None
    tolerance: float | None
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "status": self.status.value,
            "residual": self.residual,
            "tolerance": self.tolerance,
            "detail": self.detail,
        }


def _judge(name: str, residual: float, tol: float, detail: str = "") -> Check:
    ok = math.isfinite(residual) and residual <= tol
    return Check(name, CheckStatus.PASS if ok else CheckStatus.FAIL, float(residual), tol, detail)


def _skip(name: str, reason: str) -> Check:
    return Check(name, CheckStatus.SKIP, None, None, reason)


@dataclass(frozen=True)
class ValidationReport:
    checks: list[Check]

    @property
    def passed(self) -> bool:
        return all(c.status is not CheckStatus.FAIL for c in self.checks)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": [c.to_dict() for c in self.checks]}


# ---------------------------------------------------------------------------
# individual checks


def check_root_routes(off: OffspringModel, life: LifetimeModel, rep: SpectralReport) -> Check:
    """Smallest root of ``B(s) = s`` against a direct root of ``F(s) = 1``."""
    name = "F_root_vs_B_fixed_point"
    m = off.mean
    if rep.case is TheoremCase.CRITICAL:
        return _judge(name, abs(F_eval(life, m, 1.0) - 1.0), 1e-10, "critical: F(1) = 1 and B(1) = 1")
    if rep.case is not TheoremCase.SUPERCRITICAL:
        return _skip(name, "B(s) = s locates gamma only when m*l > 1")
    # direct bisection of F on (0, 1): F(0) = 0 < 1 < m l = F(1)
    s_F = optimize.bisect(lambda s: F_eval(life, m, s) - 1.0, 0.0, 1.0, xtol=1e-15, maxiter=400)
    resid = max(abs(s_F - rep.gamma), abs(b_pgf(off, life, s_F) - s_F))
    return _judge(name, resid, 1e-10, f"B root {rep.gamma!r}, F root {s_F!r}")


def check_truncation(off: OffspringModel, life: LifetimeModel, rep: SpectralReport) -> list[Check]:
    k_max = TRUNCATION_K
    if life.max_support is not None:
        k_max = min(k_max, life.max_support + 1)
    a = radius_sequence(off, life, k_max, Method.SCALAR_ROOT)
    b = radius_sequence(off, life, k_max, Method.POWER_ITERATION)
    gap = float(np.max(np.abs(a.rho - b.rho)))
    drops = float(max(0.0, -np.min(np.diff(a.rho)))) if k_max > 1 else 0.0
    over = max(0.0, float(a.rho[-1] - rep.rho)) / rep.rho
    return [
        _judge("truncation_scalar_vs_power", gap, 1e-9, f"k <= {k_max}"),
        _judge("truncation_monotone", drops, 1e-12, "rho_k nondecreasing in k"),
        _judge("truncation_below_rho", over, 1e-10, f"rho_{k_max} = {a.rho[-1]!r}, rho = {rep.rho!r}"),
    ]


def _invariant_depth(life: LifetimeModel, K: int) -> int:
    Q = life.survival(np.arange(K))
    alive = np.flatnonzero(Q > 0)
    return int(alive[-1]) + 1


def check_invariants(off: OffspringModel, life: LifetimeModel, rep: SpectralReport) -> list[Check]:
    names = ("invariant_vector", "invariant_measure", "invariant_first_column", "vu_vs_1_plus_S")
    if rep.case is TheoremCase.SUBCRITICAL_BOUNDARY:
        return [_skip(n, "gamma = R: no invariant vector or measure exists") for n in names]
    K = _invariant_depth(life, INVARIANT_K)
    if K < 2:
        return [_skip(n, "lifetime support too short for an invariant system") for n in names]
    system = invariant_system(off, life, K, rep)
    res = invariant_residuals(off, life, system)
    out = [
        _judge(names[0], res.vector, 1e-10, f"K = {K}, relative"),
        _judge(names[1], res.measure, 1e-10, f"K = {K}, relative"),
        _judge(names[2], res.first_measure, 1e-10, "first column including the tail beyond K"),
    ]
    if math.isinf(system.S):
        out.append(_skip(names[3], "S is infinite (null recurrent)"))
    else:
        out.append(_judge(names[3], res.vu_vs_S + system.vu_tail, 1e-8, f"S = {system.S!r}"))
    return out


def check_slope(off: OffspringModel, life: LifetimeModel, rep: SpectralReport) -> Check:
    name = "m_gprime_at_gamma_le_1"
    if rep.case is not TheoremCase.SUBCRITICAL_ROOT:
        return _skip(name, "applies to the subcritical case with an interior root")
    slope = lifetime_slope(off, life, rep.gamma)
    return _judge(name, max(0.0, slope - 1.0), 1e-10, f"m g'(gamma) = {slope!r}")


def _independent_extinction(off: OffspringModel, life: LifetimeModel) -> float:
    """Bisection for the smallest root of ``g(f(s)) = s``, bracketed from above by ``1 - 2**-i``."""
    h: Callable[[float], float] = lambda s: offspring_total_pgf(off, life, s) - s
    if h(0.0) <= 0.0:
        return 0.0
    for i in range(1, 60):
        hi = 1.0 - 2.0**-i
        if h(hi) < 0.0:
            return optimize.bisect(h, 0.0, hi, xtol=1e-13, maxiter=400)
    return 1.0


def check_extinction(off: OffspringModel, life: LifetimeModel, rep: SpectralReport) -> list[Check]:
    ext = extinction_probability(off, life)
    out = [_judge("extinction_fixed_point_residual", ext.residual, 1e-12, f"q = {ext.q!r}")]
    if ext.certain:
        out.append(_skip("extinction_vs_bisection", "m*l <= 1: q = 1 by criterion"))
    else:
        out.append(_judge("extinction_vs_bisection", abs(ext.q - _independent_extinction(off, life)), 1e-10))
    consistent = (rep.ml > 1.0 + 1e-12) == (rep.rho > 1.0) == (ext.q < 1.0)
    out.append(
        Check(
            "supercritical_iff_rho_gt_1_iff_q_lt_1",
            CheckStatus.PASS if consistent else CheckStatus.FAIL,
            0.0 if consistent else 1.0,
            0.0,
            f"ml = {rep.ml!r}, rho = {rep.rho!r}, q = {ext.q!r}",
        )
    )
    comp = componentwise_vector(off, life, ext.q)
    out.append(_judge("componentwise_extinction", max(comp.closure, comp.residual), 1e-10, f"depth {comp.depth}"))
    return out


def check_simulation(off: OffspringModel, life: LifetimeModel, rep: SpectralReport) -> Check:
    name = "simulated_means_vs_matrix_powers"
    n_max = SIM_GENERATIONS
    cfg = SimConfig(SIM_REPLICATES, n_max, SIM_SEED, population_cap=2**62)
    summary = estimate_growth(off, life, cfg, range(n_max + 1), rho=rep.rho)
    worst = 0.0
    for g in summary.generations:
        exact = expected_population(off, life, g.n)
        for t, (mean, se) in enumerate(zip(g.mean_per_type, g.se_per_type)):
            gap = abs(mean - exact[t])
            if gap <= 1e-12 * max(1.0, abs(exact[t])):
                continue
            if se == 0.0:
                # a rare type never seen gives a constant sample; use the Poisson scale
                se = math.sqrt(exact[t] / g.samples)
            worst = max(worst, gap / se) if se > 0 else math.inf
    return _judge(name, worst, SIM_SIGMAS, f"{SIM_REPLICATES} replicates, n <= {n_max}, in standard errors")


def validate(off: OffspringModel, life: LifetimeModel) -> ValidationReport:
    rep = convergence_radius(off, life)
    checks = [check_root_routes(off, life, rep)]
    checks += check_truncation(off, life, rep)
    checks += check_invariants(off, life, rep)
    checks.append(check_slope(off, life, rep))
    checks += check_extinction(off, life, rep)
    checks.append(check_simulation(off, life, rep))
    return ValidationReport(checks)
