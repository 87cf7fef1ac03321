from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gwlife.distributions import GeometricLifetime, PoissonOffspring, PowerTiltLifetime, make_lifetime
from gwlife.spectral import (
    F_at_radius,
    F_eval,
    GrowthUndefined,
    NoInvariantSystem,
    Recurrence,
    TheoremCase,
    b_pgf,
    classify,
    convergence_radius,
    growth_constant,
    invariant_residuals,
    invariant_system,
)
from gwlife.truncation import Method, radius_sequence
from models import model

# F(s) = m C s/(s-1) (Li_3(s/2) - Li_3(1/2)) for the a=1/2, b=3 tilt with m = 0.3, at 40 digits
TILT_F = {0.5: 0.1556654608234634524643431430281074443562, 1.5: 0.5146771468358250595415808639919049605229,
          2.0: 0.7425473359129395382124220316456821763753}
# S = m g''(1)/2 for the critical b = 4 zeta lifetime, m = zeta(4)/zeta(3)
ZETA4_S = 0.1842163888101029378683829269923959705654


def test_F_geometric_closed_form():
    off, life = model("geometric_m2")
    for s in (0.2, 0.5, 1.0, 1.9):
        x = s / 2
        assert F_eval(life, 2.0, s) == pytest.approx(2 * x / (1 - x), rel=1e-13)
    assert math.isinf(F_eval(life, 2.0, 2.5))


def test_F_tilt_against_polylog_oracle():
    off, life = model("tilt_transient")
    for s, expected in TILT_F.items():
        assert F_eval(life, 0.3, s) == pytest.approx(expected, rel=1e-12)
    boundary = F_at_radius(life, 0.3)
    assert boundary.value == pytest.approx(TILT_F[2.0], rel=1e-12)
    assert not boundary.at_least_one


def test_F_identity_with_lifetime_pgf():
    # F(s) = m s (1 - g(s)) / (1 - s)
    life = PowerTiltLifetime(0.5, 3.0)
    for s in (0.3, 0.8, 1.4):
        assert F_eval(life, 0.7, s) == pytest.approx(0.7 * s * (1 - life.pgf(s)) / (1 - s), rel=1e-12)


def test_B_is_a_pgf_with_fixed_point_gamma():
    off, life = model("geometric_m2")
    assert b_pgf(off, life, 1.0) == pytest.approx(1.0, abs=1e-15)
    assert b_pgf(off, life, 0.0) == pytest.approx(1.0 / 3.0, abs=1e-15)
    assert b_pgf(off, life, 2.0 / 3.0) == pytest.approx(2.0 / 3.0, abs=1e-15)
    with pytest.raises(ValueError):
        b_pgf(off, life, 1.5)


def test_one_season_lifetime_reduces_to_mean_offspring():
    rep = convergence_radius(*model("one_season_half"))
    assert rep.case is TheoremCase.SUBCRITICAL_ROOT
    assert rep.rho == pytest.approx(0.5, abs=1e-12)
    rep = convergence_radius(*model("one_season_doubling"))
    assert rep.case is TheoremCase.SUPERCRITICAL
    assert rep.rho == pytest.approx(2.0, abs=1e-10)


def test_report_serializes_extended_reals():
    d = convergence_radius(*model("geometric_m2")).to_dict()
    assert d["F_at_R"] == "inf"
    assert d["R"] == {"finite": 2.0}
    assert d["case"] == "Supercritical"


def test_tolerance_is_validated():
    with pytest.raises(ValueError):
        convergence_radius(*model("geometric_m2"), tol=1e-3)


def test_invariant_system_geometric_closed_form():
    off, life = model("geometric_m2")
    system = invariant_system(off, life, 50)
    # constant hazard: u is flat, v_k = (r gamma)^(k-1), S = m x^2/(1-x)^2 with x = r gamma
    x = 0.5 * (2.0 / 3.0)
    assert np.allclose(system.u, 1.0, rtol=1e-11)
    assert np.allclose(system.v, x ** np.arange(50), rtol=1e-11)
    assert system.S == pytest.approx(2 * x * x / (1 - x) ** 2, rel=1e-12)
    assert system.vu == pytest.approx(1.0 + system.S, rel=1e-12)
    assert system.growth_constant == pytest.approx(1.0, rel=1e-11)


def test_invariant_system_absent_on_boundary():
    off, life = model("tilt_transient")
    with pytest.raises(NoInvariantSystem):
        invariant_system(off, life, 20)


def test_null_recurrent_S_infinite():
    off, life = model("zeta3_critical")
    system = invariant_system(off, life, 100)
    assert math.isinf(system.S)
    assert math.isinf(system.vu)
    with pytest.raises(GrowthUndefined):
        growth_constant(off, life)


def test_positive_recurrent_zeta_S():
    off, life = model("zeta4_critical")
    system = invariant_system(off, life, 200)
    assert system.S == pytest.approx(ZETA4_S, rel=1e-12)
    res = invariant_residuals(off, life, system)
    assert res.vector < 1e-10 and res.measure < 1e-10
    assert res.vu_vs_S < 1e-8


def test_growth_constant_undefined_for_transient():
    with pytest.raises(GrowthUndefined):
        growth_constant(*model("tilt_transient"))


def test_classification_follows_criticality_for_bounded_lifetimes():
    assert classify(*model("one_season_half")).kind is Recurrence.POSITIVE
    assert classify(*model("one_season_doubling")).kind is Recurrence.POSITIVE


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 4.0), st.floats(0.2, 3.0))
def test_geometric_radius_closed_form(m, l):
    # F(s) = m r s/(1 - r s) = 1  =>  gamma = 1/(r (1 + m))
    off, life = PoissonOffspring(m), GeometricLifetime(l)
    if abs(m * l - 1.0) < 1e-6:
        return
    rep = convergence_radius(off, life)
    r = l / (1 + l)
    assert rep.rho == pytest.approx(r * (1 + m), rel=1e-10)
    assert (rep.rho > 1) == (m * l > 1)


@settings(max_examples=25, deadline=None)
@given(
    st.lists(st.floats(0.0, 1.0), min_size=2, max_size=6).filter(lambda w: sum(w[1:]) > 0.05),
    st.floats(0.2, 3.0),
)
def test_radius_dominates_truncations(weights, m):
    p = [x / math.fsum(weights) for x in weights]
    life = make_lifetime({"kind": "pmf", "p": p})
    off = PoissonOffspring(m)
    if abs(m * life.mean - 1.0) < 1e-6:
        return
    rep = convergence_radius(off, life)
    seq = radius_sequence(off, life, len(p) + 2, Method.SCALAR_ROOT)
    assert np.all(np.diff(seq.rho) >= -1e-15)
    # a bounded lifetime leaves nothing beyond the support: the last truncation is exact
    assert seq.rho[-1] == pytest.approx(rep.rho, rel=1e-9)


@pytest.mark.parametrize("eps", [1e-3, 1e-5, 1e-7])
def test_near_critical_radius_keeps_relative_accuracy(eps):
    off, life = PoissonOffspring(1.0 + eps), GeometricLifetime(1.0)
    rep = convergence_radius(off, life)
    assert rep.rho - 1.0 == pytest.approx(eps / 2, rel=1e-4)


def test_root_too_close_to_one_is_indeterminate():
    from gwlife.spectral import IndeterminateError

    with pytest.raises(IndeterminateError):
        convergence_radius(PoissonOffspring(1.0 + 1e-11), GeometricLifetime(1.0))
