from __future__ import annotations

import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gwlife.distributions import (
    GeometricLifetime,
    ModelSpecError,
    PmfLifetime,
    PowerTiltLifetime,
    make_lifetime,
    make_offspring,
)

# independent closed forms with polylogarithms, evaluated once at 40 digits
TILT_C = 1.861458377974270028424112572496085260467  # 1 / Li_3(1/2)
TILT_MEAN = 1.083816505984447220790999556349913119495  # C Li_2(1/2)
TILT_G2 = 0.2064481204381070493917955704419734159163  # C (Li_1 - Li_2)(1/2)
TILT_G_AT_1_5 = 1.571863496484250066157312071102116622803  # C Li_3(3/4)


def pmf_lists(min_size=2, max_size=7):
    return st.lists(st.floats(0.0, 1.0), min_size=min_size, max_size=max_size).filter(
        lambda w: sum(w) > 0.05
    ).map(lambda w: [x / math.fsum(w) for x in w])


# -- offspring ---------------------------------------------------------------


@pytest.mark.parametrize(
    "spec, mean, f2",
    [
        ({"kind": "pmf", "p": [0.25, 0, 0.75]}, 1.5, 1.5),
        ({"kind": "poisson", "mean": 0.7}, 0.7, 0.49),
        ({"kind": "geometric", "mean": 2.0}, 2.0, 8.0),
        ({"kind": "point", "value": 3}, 3.0, 6.0),
    ],
)
def test_offspring_moments(spec, mean, f2):
    off = make_offspring(spec)
    assert off.mean == pytest.approx(mean, rel=1e-14)
    assert off.second_factorial == pytest.approx(f2, rel=1e-14)
    assert off.pgf(1.0) == 1.0
    # derivative at 1 by finite difference of the pgf itself
    h = 1e-6
    assert (off.pgf(1.0) - off.pgf(1.0 - h)) / h == pytest.approx(mean, rel=1e-5)


def test_geometric_offspring_pgf_closed_form():
    off = make_offspring({"kind": "geometric", "mean": 2.0})
    t = 2.0 / 3.0
    for s in (0.0, 0.3, 0.9, 1.2):
        assert off.pgf(s) == pytest.approx((1 - t) / (1 - t * s), rel=1e-14)
    assert math.isinf(off.pgf(1.5))


@pytest.mark.parametrize(
    "spec",
    [
        {"kind": "pmf", "p": [0.5, 0.4]},
        {"kind": "pmf", "p": [0.5, -0.1, 0.6]},
        {"kind": "poisson", "mean": 0},
        {"kind": "point", "value": 0},
        {"kind": "point", "value": 1.5},
        {"kind": "binomial", "n": 3},
        {"kind": "poisson"},
    ],
)
def test_offspring_rejects_bad_specs(spec):
    with pytest.raises(ModelSpecError):
        make_offspring(spec)


@pytest.mark.parametrize(
    "spec",
    [
        {"kind": "poisson", "mean": 1.3},
        {"kind": "geometric", "mean": 0.8},
        {"kind": "pmf", "p": [0.2, 0.3, 0.5]},
    ],
)
def test_sample_total_mean(spec):
    off = make_offspring(spec)
    rng = np.random.default_rng(5)
    totals = np.array([off.sample_total(rng, 50) for _ in range(4000)])
    se = totals.std(ddof=1) / math.sqrt(totals.size)
    assert abs(totals.mean() - 50 * off.mean) < 4 * se


# -- lifetime ----------------------------------------------------------------


def test_geometric_lifetime_sequences():
    life = GeometricLifetime(1.0)
    k = np.arange(0, 30)
    assert np.allclose(life.survival(k), 0.5**k, rtol=1e-13, atol=0)
    assert np.allclose(life.hazard(np.arange(1, 30)), 0.5, rtol=1e-14)
    assert life.radius == 2.0
    assert life.second_factorial == 2.0
    assert life.pgf(1.5) == pytest.approx(0.5 / (1 - 0.75), rel=1e-15)


def test_pmf_lifetime_one_season():
    life = make_lifetime({"kind": "pmf", "p": [0, 1]})
    assert life.mean == 1.0
    assert list(life.survival([0, 1, 2, 3])) == [1.0, 1.0, 0.0, 0.0]
    assert list(life.hazard([1, 2, 3])) == [1.0, 0.0, 0.0]


def test_point_lifetime_matches_pmf():
    a = make_lifetime({"kind": "point", "value": 3})
    b = make_lifetime({"kind": "pmf", "p": [0, 0, 0, 1]})
    k = np.arange(6)
    assert np.array_equal(a.survival(k), b.survival(k))


@pytest.mark.parametrize(
    "spec",
    [
        {"kind": "pmf", "p": [1.0]},
        {"kind": "geometric", "mean": -1},
        {"kind": "power_tilt", "a": 1.0, "b": 2.0},
        {"kind": "power_tilt", "a": 1.5, "b": 3.0},
        {"kind": "power_tilt", "a": 0.5},
    ],
)
def test_lifetime_rejects_bad_specs(spec):
    with pytest.raises(ModelSpecError):
        make_lifetime(spec)


def test_power_tilt_against_polylog_oracle():
    life = PowerTiltLifetime(0.5, 3.0)
    assert life.normalizer == pytest.approx(TILT_C, rel=1e-14)
    assert life.mean == pytest.approx(TILT_MEAN, rel=1e-14)
    assert life.second_factorial == pytest.approx(TILT_G2, rel=1e-13)
    assert life.pgf(1.5) == pytest.approx(TILT_G_AT_1_5, rel=1e-13)
    assert life.radius == 2.0


def test_power_tilt_survival_is_brute_force_tail_sum():
    life = PowerTiltLifetime(0.5, 3.0)
    k = np.arange(1, 4000, dtype=float)
    h = TILT_C * 0.5**k * k**-3.0
    brute = np.cumsum(h[::-1])[::-1]  # Q_j = sum_{k>=j} h_k
    j = np.arange(1, 60)
    assert np.allclose(life.survival(j), brute[j - 1], rtol=1e-13, atol=0)


@pytest.mark.parametrize("b", [3.0, 4.0, 5.5])
def test_zeta_lifetime_moments(b):
    life = PowerTiltLifetime(1.0, b)
    mp.mp.dps = 30
    assert life.mean == pytest.approx(float(mp.zeta(b - 1) / mp.zeta(b)), rel=1e-13)
    if b > 3:
        g2 = (mp.zeta(b - 2) - mp.zeta(b - 1)) / mp.zeta(b)
        assert life.second_factorial == pytest.approx(float(g2), rel=1e-12)
    else:
        assert math.isinf(life.second_factorial)
    j = np.array([1, 2, 10, 1000])
    brute = [float(mp.zeta(b, int(x)) / mp.zeta(b)) for x in j]
    assert np.allclose(life.survival(j), brute, rtol=1e-12, atol=0)


def test_survival_series_at_unit_radius_uses_moment_identities():
    life = PowerTiltLifetime(1.0, 4.0)
    head = life.survival(np.arange(1, 11))
    rest = life.survival_series(1.0, start=11)
    assert rest.value == pytest.approx(life.mean - math.fsum(head), rel=1e-12)
    S = life.survival_series(1.0, offset=1)
    assert S.value == pytest.approx(life.second_factorial / 2, rel=1e-14)


@settings(max_examples=60, deadline=None)
@given(pmf_lists())
def test_pmf_lifetime_identities(p):
    if p[0] >= 1.0 - 1e-9:
        return
    life = PmfLifetime(p)
    K = len(p)
    Q = life.survival(np.arange(0, K + 2))
    assert Q[0] == 1.0
    assert np.all(np.diff(Q) <= 1e-15)
    q = life.hazard(np.arange(1, K + 2))
    assert np.all((q >= 0) & (q <= 1))
    # sum_{j>=1} Q_j = l and sum_j (j-1) Q_j = g''(1)/2
    j = np.arange(1, K + 2)
    assert math.fsum(Q[1:]) == pytest.approx(life.mean, rel=1e-12, abs=1e-15)
    assert math.fsum((j - 1) * Q[1:]) == pytest.approx(life.second_factorial / 2, rel=1e-12, abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.0, 6.0), st.floats(0.0, 0.99))
def test_power_tilt_pgf_monotone_and_bounded(a, b, frac):
    life = PowerTiltLifetime(a, b)
    s1 = frac * life.radius
    s2 = min(s1 + 0.01, life.radius)
    g1, g2 = life.pgf(s1), life.pgf(s2)
    assert g1 <= g2 * (1 + 1e-12)
    if s2 <= 1.0:
        assert g2 <= 1.0 + 1e-12
    Q = life.survival(np.arange(0, 50))
    assert np.all(np.diff(Q) <= 1e-16)


@pytest.mark.parametrize(
    "life",
    [
        PowerTiltLifetime(0.5, 3.0),
        PowerTiltLifetime(1.0, 4.0),
        make_lifetime({"kind": "pmf", "p": [0.2, 0.3, 0.5]}),
        GeometricLifetime(2.0),
    ],
)
def test_pgf_complement_matches_one_minus_pgf(life):
    for s in (0.0, 0.25, 0.9, 1.0):
        assert life.pgf_complement(s) == pytest.approx(1.0 - life.pgf(s), rel=1e-12, abs=1e-15)
    # near 1 the complement behaves like l (1 - s), which the plain difference cannot resolve
    s = 1.0 - 1e-10
    assert life.pgf_complement(s) == pytest.approx(life.mean * 1e-10, rel=1e-6)
