"""Offspring and lifetime laws of a Galton-Watson process with variable lifetimes.

An individual lives ``L`` seasons (pmf ``h_k``) and, in every season it
survives, produces a random number of offspring (pmf ``p_k``).  Lifetimes
are described through hazards ``q_k = P(L >= k | L >= k-1)`` and survivals
``Q_k = q_1 ... q_k = P(L >= k)``.

Models are built from plain dictionaries (the JSON model-spec schema)::

    {"kind": "pmf", "p": [0.25, 0, 0.75]}
    {"kind": "poisson", "mean": 1.3}
    {"kind": "geometric", "mean": 2.0}
    {"kind": "point", "value": 2}
    {"kind": "power_tilt", "a": 0.5, "b": 3}    # lifetimes only

Infinite values (divergent series, infinite moments) are returned as
``math.inf``.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from typing import Any, Mapping

import numpy as np
from scipy import signal, special

from gwlife._series import SeriesSum, sum_log_series, poly_tail

NORMALIZATION_TOL = 1e-12

OFFSPRING_KINDS = ("pmf", "poisson", "geometric", "point")
LIFETIME_KINDS = ("pmf", "geometric", "power_tilt", "point")


class ModelSpecError(ValueError):
    """Raised for malformed or unsupported model specifications."""


def _log(x: np.ndarray | float) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(x)


def _log_falling(k: np.ndarray, order: int) -> np.ndarray:
    """log of k (k-1) ... (k-order+1); -inf where the product vanishes."""
    out = np.zeros(k.shape, dtype=float)
    for i in range(order):
        out = out + _log(np.maximum(k - i, 0).astype(float))
    return out


def _check_pmf(values: Any, what: str) -> np.ndarray:
    try:
        arr = np.asarray(values, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ModelSpecError(f"{what} pmf must be a list of numbers") from exc
    if arr.ndim != 1 or arr.size == 0:
        raise ModelSpecError(f"{what} pmf must be a non-empty list")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ModelSpecError(f"{what} pmf has negative or non-finite entries")
    total = math.fsum(arr)
    if abs(total - 1.0) > NORMALIZATION_TOL:
        raise ModelSpecError(f"{what} pmf sums to {total!r}, not 1")
    arr = arr / total
    nz = np.flatnonzero(arr)
    return arr[: nz[-1] + 1]


def _positive_finite(value: Any, name: str) -> float:
    try:
        x = float(value)
    except (TypeError, ValueError) as exc:
        raise ModelSpecError(f"{name} must be a number, got {value!r}") from exc
    if not math.isfinite(x) or x <= 0:
        raise ModelSpecError(f"{name} must be positive and finite, got {value!r}")
    return x


def _point_index(value: Any) -> int:
    if isinstance(value, bool) or not float(value).is_integer() or int(value) < 0:
        raise ModelSpecError(f"point mass location must be a nonnegative integer, got {value!r}")
    return int(value)


# ---------------------------------------------------------------------------
# offspring


class OffspringModel(ABC):
    """Offspring law: pmf, pgf ``f``, mean ``m`` and an exact sampler."""

    kind: str
    mean: float
    second_factorial: float  # f''(1)
    radius: float  # radius of convergence of f

    @abstractmethod
    def pmf(self, k: np.ndarray | int) -> np.ndarray: ...

    @abstractmethod
    def _pgf(self, s: float, order: int) -> float: ...

    @abstractmethod
    def sample_total(self, rng: np.random.Generator, n: int) -> int:
        """Total offspring of ``n`` independent parents."""

    @abstractmethod
    def to_spec(self) -> dict: ...

    def pgf(self, s: float, order: int = 0) -> float:
        if s < 0:
            raise ValueError("pgf argument must be nonnegative")
        if order not in (0, 1, 2):
            raise ValueError("order must be 0, 1 or 2")
        if s == 1.0:
            return (1.0, self.mean, self.second_factorial)[order]
        if s > self.radius or (s == self.radius and math.isfinite(s)):
            return math.inf
        return self._pgf(float(s), order)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.array([self.sample_total(rng, 1) for _ in range(size)], dtype=np.int64)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.to_spec()})"


class PmfOffspring(OffspringModel):
    kind = "pmf"

    def __init__(self, p: Any):
        self.p = _check_pmf(p, "offspring")
        self.p.setflags(write=False)
        k = np.arange(self.p.size)
        self.mean = math.fsum(k * self.p)
        self.second_factorial = math.fsum(k * (k - 1) * self.p)
        self.radius = math.inf

    def pmf(self, k):
        k = np.asarray(k)
        out = np.zeros(k.shape)
        ok = (k >= 0) & (k < self.p.size)
        out[ok] = self.p[k[ok]]
        return out

    def _pgf(self, s, order):
        k = np.arange(order, self.p.size)
        if k.size == 0:
            return 0.0
        coef = np.exp(_log_falling(k, order)) * self.p[order:]
        return float(np.polynomial.polynomial.polyval(s, coef))

    def sample_total(self, rng, n):
        if n == 0:
            return 0
        counts = rng.multinomial(n, self.p)
        return int(counts @ np.arange(self.p.size))

    def sample(self, rng, size):
        return rng.choice(self.p.size, size=size, p=self.p)

    def to_spec(self):
        return {"kind": "pmf", "p": [float(x) for x in self.p]}


class PoissonOffspring(OffspringModel):
    kind = "poisson"

    def __init__(self, mean: float):
        self.mean = _positive_finite(mean, "offspring mean")
        self.second_factorial = self.mean**2
        self.radius = math.inf

    def pmf(self, k):
        k = np.asarray(k)
        out = np.zeros(k.shape)
        ok = k >= 0
        out[ok] = np.exp(k[ok] * math.log(self.mean) - self.mean - special.gammaln(k[ok] + 1))
        return out

    def _pgf(self, s, order):
        return self.mean**order * math.exp(self.mean * (s - 1.0))

    def sample_total(self, rng, n):
        return int(rng.poisson(self.mean * n)) if n else 0

    def sample(self, rng, size):
        return rng.poisson(self.mean, size=size)

    def to_spec(self):
        return {"kind": "poisson", "mean": self.mean}


class GeometricOffspring(OffspringModel):
    """Geometric law on {0, 1, ...}: ``p_k = (1 - t) t**k`` with ``t = m / (1 + m)``."""

    kind = "geometric"

    def __init__(self, mean: float):
        self.mean = _positive_finite(mean, "offspring mean")
        self.ratio = self.mean / (1.0 + self.mean)
        self.second_factorial = 2.0 * self.mean**2
        self.radius = 1.0 / self.ratio

    def pmf(self, k):
        k = np.asarray(k)
        out = np.zeros(k.shape)
        ok = k >= 0
        out[ok] = (1.0 - self.ratio) * self.ratio ** k[ok]
        return out

    def _pgf(self, s, order):
        t = self.ratio
        return math.factorial(order) * (1.0 - t) * t**order / (1.0 - t * s) ** (order + 1)

    def sample_total(self, rng, n):
        # a sum of n geometric failure counts is negative binomial
        return int(rng.negative_binomial(n, 1.0 - self.ratio)) if n else 0

    def sample(self, rng, size):
        return rng.geometric(1.0 - self.ratio, size=size) - 1

    def to_spec(self):
        return {"kind": "geometric", "mean": self.mean}


class PointOffspring(OffspringModel):
    kind = "point"

    def __init__(self, value: int):
        self.value = _point_index(value)
        if self.value == 0:
            raise ModelSpecError("offspring mean must be positive")
        self.mean = float(self.value)
        self.second_factorial = float(self.value * (self.value - 1))
        self.radius = math.inf

    def pmf(self, k):
        return (np.asarray(k) == self.value).astype(float)

    def _pgf(self, s, order):
        j = self.value
        if order > j:
            return 0.0
        return math.perm(j, order) * s ** (j - order)

    def sample_total(self, rng, n):
        return self.value * n

    def sample(self, rng, size):
        return np.full(size, self.value, dtype=np.int64)

    def to_spec(self):
        return {"kind": "point", "value": self.value}


def make_offspring(spec: Mapping[str, Any]) -> OffspringModel:
    """Build an offspring model from its spec dictionary."""
    if not isinstance(spec, Mapping) or "kind" not in spec:
        raise ModelSpecError("offspring spec must be an object with a 'kind'")
    kind = spec["kind"]
    try:
        if kind == "pmf":
            model: OffspringModel = PmfOffspring(spec["p"])
        elif kind == "poisson":
            model = PoissonOffspring(spec["mean"])
        elif kind == "geometric":
            model = GeometricOffspring(spec["mean"])
        elif kind == "point":
            model = PointOffspring(spec["value"])
        else:
            raise ModelSpecError(f"unknown offspring kind {kind!r}")
    except KeyError as exc:
        raise ModelSpecError(f"offspring spec of kind {kind!r} is missing {exc}") from None
    if not (0 < model.mean < math.inf):
        raise ModelSpecError("offspring mean must satisfy 0 < m < inf")
    return model


# ---------------------------------------------------------------------------
# lifetime


class LifetimeModel(ABC):
    """Lifetime law with hazards, survivals and the pgf ``g``.

    Subclasses provide the log pmf and log survival sequences together with
    bounds on their tails at the radius of convergence ``R``; everything
    else (pgf, survival power series) is summed generically.
    """

    kind: str
    mean: float  # l
    second_factorial: float  # g''(1)
    radius: float  # R = 1 / limsup Q_k**(1/k)
    max_support: int | None = None

    @abstractmethod
    def log_pmf(self, k: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def log_survival(self, k: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def to_spec(self) -> dict: ...

    def _pmf_radius_tail(self, degree: int, n: int) -> float | None:
        """Bound on ``sum_{k>n} k**degree h_k R**k``; None if divergent."""
        return None

    def _survival_radius_tail(self, degree: int, n: int) -> float | None:
        """Bound on ``sum_{j>n} j**degree Q_j R**j``; None if divergent."""
        return None

    # -- sequences ---------------------------------------------------------

    def pmf(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=np.int64)
        return np.exp(self.log_pmf(k))

    def survival(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=np.int64)
        return np.exp(self.log_survival(k))

    def hazard(self, k) -> np.ndarray:
        """``q_k = Q_k / Q_{k-1}`` for ``k >= 1``; zero once ``Q_{k-1} = 0``."""
        k = np.asarray(k, dtype=np.int64)
        if np.any(k < 1):
            raise ValueError("hazards are indexed from k = 1")
        lo = self.log_survival(k - 1)
        hi = self.log_survival(k)
        out = np.zeros(k.shape)
        ok = np.isfinite(lo)
        with np.errstate(invalid="ignore"):
            out[ok] = np.exp(hi[ok] - lo[ok])
        return np.minimum(out, 1.0)

    # -- power series --------------------------------------------------------

    def pgf(self, s: float, order: int = 0) -> float:
        """``g`` or its first/second derivative at ``s >= 0``; inf beyond ``R``."""
        if s < 0:
            raise ValueError("pgf argument must be nonnegative")
        if order not in (0, 1, 2):
            raise ValueError("order must be 0, 1 or 2")
        if s == 1.0:
            return (1.0, self.mean, self.second_factorial)[order]
        return self._pmf_series(float(s), order).value

    def pgf_complement(self, s: float) -> float:
        """``1 - g(s)`` on ``[0, 1]`` without cancellation near ``s = 1``.

        Summed as ``sum_k h_k (1 - s**k)``; the remainder after ``n`` terms is
        at most ``Q_{n+1}``.
        """
        if not 0.0 <= s <= 1.0:
            raise ValueError("pgf_complement is evaluated on [0, 1]")
        if s == 1.0:
            return 0.0
        if s == 0.0:
            return 1.0 - float(self.pmf(np.array([0]))[0])
        log_s = math.log(s)

        def log_term(k):
            return self.log_pmf(k) + np.log(-np.expm1(k * log_s))

        tail = lambda n: float(np.exp(self.log_survival(np.array([n + 1]))[0]))
        return sum_log_series(log_term, 1, stop=self.max_support, tail_bound=tail).value

    def _pmf_series(self, s: float, order: int) -> SeriesSum:
        if s > self.radius:
            return SeriesSum(math.inf, math.inf, 0)
        if s == 0.0:
            h = float(self.pmf(np.array([order]))[0])
            return SeriesSum(math.factorial(order) * h, 0.0, 1)
        log_s = math.log(s)

        def log_term(k):
            return _log_falling(k, order) + self.log_pmf(k) + (k - order) * log_s

        theta = s / self.radius
        if s == self.radius:
            tail = lambda n: _scaled(self._pmf_radius_tail(order, n), self.radius ** -order)
            return sum_log_series(log_term, order, tail_bound=tail)
        return sum_log_series(
            log_term,
            order,
            stop=self.max_support,
            ratio_bound=lambda n: theta * (n + 1) / (n + 1 - order),
        )

    def survival_series(self, s: float, *, start: int = 1, offset: int | None = None) -> SeriesSum:
        """``sum_{j >= start} w_j Q_j s**j`` with ``w_j = 1`` or ``w_j = j - offset``."""
        if s < 0:
            raise ValueError("series argument must be nonnegative")
        if s > self.radius:
            return SeriesSum(math.inf, math.inf, 0)
        if offset is not None and start <= offset:
            start = offset + 1
        if s == 0.0:
            if start > 0:
                return SeriesSum(0.0, 0.0, 0)
            return SeriesSum(1.0 if offset is None else float(-offset), 0.0, 1)
        log_s = math.log(s)

        def log_term(j):
            out = self.log_survival(j) + j * log_s
            if offset is not None:
                out = out + _log((j - offset).astype(float))
            return out

        degree = 0 if offset is None else 1
        if s == 1.0 == self.radius:
            return self._survival_moment_tail(start, offset)
        if s == self.radius:
            return sum_log_series(
                log_term, start, tail_bound=lambda n: self._survival_radius_tail(degree, n)
            )
        theta = s / self.radius
        if offset is None:
            ratio = lambda n: theta
        else:
            ratio = lambda n: theta * (n + 1 - offset) / (n - offset)
        stop = None if self.max_support is None else self.max_support
        return sum_log_series(log_term, start, stop=stop, ratio_bound=ratio)

    def _survival_moment_tail(self, start: int, offset: int | None) -> SeriesSum:
        """Survival sums at ``s = 1`` from ``sum_j Q_j = l`` and ``sum_j (j-1) Q_j = g''(1)/2``.

        At ``R = 1`` the terms decay only polynomially, so subtracting a
        finite head from the closed-form total beats direct summation.
        """
        j = np.arange(1, max(start, 1), dtype=np.int64)
        Q = np.exp(self.log_survival(j))
        rest0 = self.mean - math.fsum(Q)
        err = 4 * np.finfo(float).eps * self.mean
        if offset is None:
            return SeriesSum(max(rest0, 0.0), err, j.size)
        if math.isinf(self.second_factorial):
            return SeriesSum(math.inf, math.inf, 0)
        rest1 = self.second_factorial / 2.0 - math.fsum((j - 1) * Q)
        value = rest1 + (1 - offset) * rest0
        err = 4 * np.finfo(float).eps * (self.second_factorial / 2.0 + abs(1 - offset) * self.mean)
        return SeriesSum(max(value, 0.0), err, j.size)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.to_spec()})"


def _scaled(x: float | None, factor: float) -> float | None:
    return None if x is None else x * factor


class PmfLifetime(LifetimeModel):
    """Lifetime with an explicit, finitely supported pmf ``h[0..K]``."""

    kind = "pmf"

    def __init__(self, h: Any):
        self.h = _check_pmf(h, "lifetime")
        self.h.setflags(write=False)
        self.max_support = self.h.size - 1
        # Q_k = sum_{j >= k} h_j for k = 0..K+1
        tail = np.concatenate([np.cumsum(self.h[::-1])[::-1], [0.0]])
        tail[0] = 1.0
        self._Q = tail
        if self._Q[1] <= 0:
            raise ModelSpecError("lifetime h_0 = 1: no individual survives its first season")
        k = np.arange(self.h.size)
        self.mean = math.fsum(k * self.h)
        self.second_factorial = math.fsum(k * (k - 1) * self.h)
        self.radius = math.inf

    def log_pmf(self, k):
        k = np.asarray(k, dtype=np.int64)
        out = np.full(k.shape, -np.inf)
        ok = (k >= 0) & (k <= self.max_support)
        out[ok] = _log(self.h[k[ok]])
        return out

    def log_survival(self, k):
        k = np.asarray(k, dtype=np.int64)
        out = np.full(k.shape, -np.inf)
        out[k <= 0] = 0.0
        ok = (k > 0) & (k <= self.max_support)
        out[ok] = _log(self._Q[k[ok]])
        return out

    def to_spec(self):
        return {"kind": "pmf", "p": [float(x) for x in self.h]}


class GeometricLifetime(LifetimeModel):
    """``h_k = (1 - r) r**k`` on {0, 1, ...} with ``r = l / (1 + l)``; constant hazard ``r``."""

    kind = "geometric"

    def __init__(self, mean: float):
        self.mean = _positive_finite(mean, "lifetime mean")
        self.r = self.mean / (1.0 + self.mean)
        self._log_r = math.log(self.r)
        self.second_factorial = 2.0 * self.mean**2
        self.radius = 1.0 / self.r

    def log_pmf(self, k):
        k = np.asarray(k, dtype=np.int64)
        out = math.log1p(-self.r) + k * self._log_r
        return np.where(k >= 0, out, -np.inf)

    def log_survival(self, k):
        k = np.asarray(k, dtype=np.int64)
        return np.maximum(k, 0) * self._log_r

    def pgf(self, s, order=0):
        if s < 0:
            raise ValueError("pgf argument must be nonnegative")
        if order not in (0, 1, 2):
            raise ValueError("order must be 0, 1 or 2")
        if s * self.r >= 1.0:
            return math.inf
        r = self.r
        return math.factorial(order) * (1.0 - r) * r**order / (1.0 - r * s) ** (order + 1)

    def pgf_complement(self, s):
        if not 0.0 <= s <= 1.0:
            raise ValueError("pgf_complement is evaluated on [0, 1]")
        return self.r * (1.0 - s) / (1.0 - self.r * s)

    def to_spec(self):
        return {"kind": "geometric", "mean": self.mean}


class PowerTiltLifetime(LifetimeModel):
    """``h_k = C a**k k**(-b)`` for ``k >= 1`` (``0 < a <= 1``, ``b >= 0``)."""

    kind = "power_tilt"

    def __init__(self, a: float, b: float):
        a = float(a)
        b = float(b)
        if not (0.0 < a <= 1.0) or not math.isfinite(b) or b < 0.0:
            raise ModelSpecError("power_tilt needs 0 < a <= 1 and b >= 0")
        if a == 1.0 and b <= 2.0:
            raise ModelSpecError("power_tilt with a = 1 needs b > 2 for a finite mean")
        self.a = a
        self.b = b
        self.radius = 1.0 / a
        if a == 1.0:
            zb = float(special.zeta(b, 1))
            self._log_c = -math.log(zb)
            self.mean = float(special.zeta(b - 1.0, 1)) / zb
            if b > 3.0:
                self.second_factorial = (
                    float(special.zeta(b - 2.0, 1)) - float(special.zeta(b - 1.0, 1))
                ) / zb
            else:
                self.second_factorial = math.inf
        else:
            self._log_a = math.log(a)
            # inner sums sum_{i>=0} a**i (1 + i/j)**(-b) need this many terms
            self._phi_terms = int(math.ceil(math.log(1e-18 * (1.0 - a)) / self._log_a)) + 1
            self._log_c = 0.0
            norm = sum_log_series(
                lambda k: k * self._log_a - b * _log(k.astype(float)),
                1,
                ratio_bound=lambda n: a,
            )
            self._log_c = -math.log(norm.value)
            self.mean = self._pmf_series(1.0, 1).value
            self.second_factorial = self._pmf_series(1.0, 2).value

    @property
    def normalizer(self) -> float:
        return math.exp(self._log_c)

    def log_pmf(self, k):
        k = np.asarray(k, dtype=np.int64)
        kf = np.maximum(k, 1).astype(float)
        out = self._log_c + kf * math.log(self.a) - self.b * np.log(kf)
        return np.where(k >= 1, out, -np.inf)

    def log_survival(self, k):
        k = np.asarray(k, dtype=np.int64)
        out = np.zeros(k.shape)
        pos = k >= 2
        if np.any(pos):
            out[pos] = self._log_tail(k[pos])
        return out

    def _log_tail(self, j: np.ndarray) -> np.ndarray:
        """log Q_j for j >= 1."""
        jf = j.astype(float)
        if self.a == 1.0:
            return self._log_c + np.log(special.zeta(self.b, jf))
        # Q_j = C a**j j**(-b) psi_j,  psi_j = sum_{i>=0} a**i (1 + i/j)**(-b)
        return self._log_c + jf * self._log_a - self.b * np.log(jf) + np.log(self._psi(j))

    def _psi(self, j: np.ndarray) -> np.ndarray:
        contiguous = j.size > 64 and bool(np.all(np.diff(j) == 1))
        if not contiguous or self.b * math.log(float(j[-1])) > 600.0:
            return self._psi_direct(j)
        # phi_j = j**(-b) psi_j obeys phi_j = j**(-b) + a phi_{j+1}; run it backwards
        top = j[-1] + 1
        phi_top = float(self._psi_direct(np.array([top]))[0]) * float(top) ** -self.b
        x = j[::-1].astype(float) ** -self.b
        phi, _ = signal.lfilter([1.0], [1.0, -self.a], x, zi=[self.a * phi_top])
        return phi[::-1] * j.astype(float) ** self.b

    def _psi_direct(self, j: np.ndarray) -> np.ndarray:
        jf = j.astype(float)[:, None]
        acc = np.zeros(j.shape)
        for i0 in range(0, self._phi_terms, 64):
            i = np.arange(i0, min(i0 + 64, self._phi_terms), dtype=float)[None, :]
            acc += (self.a**i * (1.0 + i / jf) ** -self.b).sum(axis=1)
        return acc

    def _pmf_radius_tail(self, degree, n):
        # h_k R**k = C k**(-b)
        return poly_tail(self.normalizer, degree - self.b, n)

    def _survival_radius_tail(self, degree, n):
        if self.a == 1.0:
            # Q_j <= C (j**(-b) + j**(1-b) / (b-1)) <= C b/(b-1) j**(1-b)
            return poly_tail(self.normalizer * self.b / (self.b - 1.0), degree + 1.0 - self.b, n)
        # Q_j R**j <= C j**(-b) / (1 - a)
        return poly_tail(self.normalizer / (1.0 - self.a), degree - self.b, n)

    def to_spec(self):
        return {"kind": "power_tilt", "a": self.a, "b": self.b}


def make_lifetime(spec: Mapping[str, Any]) -> LifetimeModel:
    """Build a lifetime model from its spec dictionary."""
    if not isinstance(spec, Mapping) or "kind" not in spec:
        raise ModelSpecError("lifetime spec must be an object with a 'kind'")
    kind = spec["kind"]
    try:
        if kind == "pmf":
            model: LifetimeModel = PmfLifetime(spec["p"])
        elif kind == "geometric":
            model = GeometricLifetime(spec["mean"])
        elif kind == "power_tilt":
            model = PowerTiltLifetime(spec["a"], spec["b"])
        elif kind == "point":
            j = _point_index(spec["value"])
            model = PmfLifetime(np.eye(j + 1)[j])
        else:
            raise ModelSpecError(f"unknown lifetime kind {kind!r}")
    except KeyError as exc:
        raise ModelSpecError(f"lifetime spec of kind {kind!r} is missing {exc}") from None
    if not math.isfinite(model.mean):
        raise ModelSpecError("lifetime mean is infinite")
    return model


def pgf_eval(model: OffspringModel | LifetimeModel, s: float, order: int = 0) -> float:
    """Value of ``f`` or ``g`` (or a derivative) at ``s``; ``math.inf`` past the radius."""
    return model.pgf(s, order)


def tail_radius(model: LifetimeModel) -> float:
    """Radius of convergence ``R`` of ``sum Q_k s**k``."""
    return model.radius
