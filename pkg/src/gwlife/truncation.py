"""Northwest-corner truncations of the mean matrix.

``M^(k)`` keeps types ``1..k``.  Its spectral radius ``rho_k`` is computed
either from the scalar equation ``F_k(s) = m sum_{j<=k} Q_j s**j = 1``
(``rho_k = 1/s_k``) or, independently, by power iteration on the sparse
matrix.  Exact expected population vectors come from sparse matrix powers.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import optimize, sparse
from scipy.sparse import linalg as spla

from gwlife.distributions import LifetimeModel, OffspringModel

POWER_TOL = 1e-12
POWER_MAXITER = 100_000
PLAIN_ITERATIONS = 200


class Method(str, Enum):
    SCALAR_ROOT = "scalar_root"
    POWER_ITERATION = "power_iteration"


class PowerIterationError(RuntimeError):
    pass


@dataclass(frozen=True)
class TruncatedMatrix:
    """``k x k`` corner of ``M``: column 1 is ``m q_i``, superdiagonal ``q_i``."""

    k: int
    first_column: np.ndarray  # m q_1 .. m q_k
    superdiagonal: np.ndarray  # q_1 .. q_{k-1}

    def matvec(self, x: np.ndarray) -> np.ndarray:
        y = self.first_column * x[0]
        y[:-1] += self.superdiagonal * x[1:]
        return y

    def rmatvec(self, x: np.ndarray) -> np.ndarray:
        """Row vector times matrix, ``x M``."""
        y = np.empty_like(x, dtype=float)
        y[0] = math.fsum(x * self.first_column)
        y[1:] = x[:-1] * self.superdiagonal
        return y

    def to_sparse(self) -> sparse.csr_matrix:
        k = self.k
        rows = np.concatenate([np.arange(k), np.arange(k - 1)])
        cols = np.concatenate([np.zeros(k, dtype=int), np.arange(1, k)])
        vals = np.concatenate([self.first_column, self.superdiagonal])
        return sparse.csr_matrix((vals, (rows, cols)), shape=(k, k))

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()


def truncated_matrix(off: OffspringModel, life: LifetimeModel, k: int) -> TruncatedMatrix:
    if k < 1:
        raise ValueError("k must be at least 1")
    q = life.hazard(np.arange(1, k + 1))
    return TruncatedMatrix(k, off.mean * q, q[:-1].copy())


# ---------------------------------------------------------------------------
# spectral radius of a truncation


def _scalar_root(m: float, log_Q: np.ndarray) -> float:
    """Positive root of ``m sum_{j=1}^{k} Q_j s**j = 1``; ``log_Q[j-1] = log Q_j``."""
    j = np.arange(1, log_Q.size + 1)
    keep = np.isfinite(log_Q)
    j, log_Q = j[keep], log_Q[keep]
    log_m = math.log(m)

    def fn(s: float) -> float:
        with np.errstate(over="ignore"):
            return float(np.exp(log_m + log_Q + j * math.log(s)).sum()) - 1.0

    hi = 1.0
    while fn(hi) < 0.0:
        hi *= 2.0
    lo = hi / 2.0
    while fn(lo) > 0.0:
        lo /= 2.0
    return optimize.bisect(fn, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=2000)


def _power_radius(M: TruncatedMatrix, tol: float = POWER_TOL, maxiter: int = POWER_MAXITER) -> float:
    """Spectral radius of an irreducible nonnegative ``M`` by the power method.

    The Collatz-Wielandt quotients ``min (Mx)_i/x_i <= rho <= max (Mx)_i/x_i``
    bracket the radius for any positive ``x``; iteration stops once the
    bracket is narrower than ``tol * rho``.  The first iterations use the
    aperiodic average ``(M + I)/2``.  If that is slow, the iteration switches
    to the inverse power method with shift ``sigma`` just above the current
    upper bracket: every other eigenvalue is farther from ``sigma`` than
    ``rho`` is, so the iteration still converges to ``rho``.
    """
    k = M.k
    if k == 1:
        return float(M.first_column[0])
    x = np.ones(k)
    A = None
    eye = sparse.identity(k, format="csc")
    for it in range(maxiter):
        y = M.matvec(x)
        ratios = y / x
        lo, hi = float(ratios.min()), float(ratios.max())
        if hi - lo <= tol * hi:
            return 0.5 * (lo + hi)
        if it < PLAIN_ITERATIONS:
            x = 0.5 * (x + y)
        else:
            if A is None:
                A = M.to_sparse().tocsc()
            sigma = hi + (hi - lo)
            x = spla.splu((sigma * eye - A).tocsc()).solve(x)
        x = x / x.max()
    raise PowerIterationError(f"power iteration did not converge in {maxiter} steps (k={k})")


def _irreducible_core(M: TruncatedMatrix) -> int:
    """Number of leading types with nonzero rows, i.e. ``q_i > 0``."""
    zero = np.flatnonzero(M.first_column <= 0.0)
    return int(zero[0]) if zero.size else M.k


def truncated_radius(
    off: OffspringModel,
    life: LifetimeModel,
    k: int,
    method: Method | str = Method.SCALAR_ROOT,
) -> float:
    """Spectral radius ``rho_k`` of ``M^(k)``."""
    method = Method(method)
    if k < 1:
        raise ValueError("k must be at least 1")
    if method is Method.SCALAR_ROOT:
        return 1.0 / _scalar_root(off.mean, life.log_survival(np.arange(1, k + 1)))
    M = truncated_matrix(off, life, k)
    core = _irreducible_core(M)
    if core == 0:
        return 0.0
    if core < k:
        # types past the first zero hazard have zero rows: eigenvalue 0
        M = TruncatedMatrix(core, M.first_column[:core].copy(), M.superdiagonal[: core - 1].copy())
    return _power_radius(M)


@dataclass(frozen=True)
class RadiusSequence:
    k_values: np.ndarray
    rho: np.ndarray
    method: Method

    def rows(self):
        for k, r in zip(self.k_values, self.rho):
            yield int(k), float(r), self.method.value


def radius_sequence(
    off: OffspringModel,
    life: LifetimeModel,
    k_max: int,
    method: Method | str = Method.SCALAR_ROOT,
) -> RadiusSequence:
    """``rho_1 .. rho_{k_max}``; nondecreasing in ``k``."""
    method = Method(method)
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    ks = np.arange(1, k_max + 1)
    if method is Method.SCALAR_ROOT:
        log_Q = life.log_survival(ks)
        rho = np.array([1.0 / _scalar_root(off.mean, log_Q[:k]) for k in ks])
    else:
        rho = np.array([truncated_radius(off, life, int(k), method) for k in ks])
    return RadiusSequence(ks, rho, method)


def sequences_to_csv(sequences: list[RadiusSequence], reference: float | None = None) -> str:
    """CSV ``k,rho_k,method``; an optional ``analytic`` reference row has ``k = inf``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "rho_k", "method"])
    for seq in sequences:
        for k, r, name in seq.rows():
            w.writerow([k, format(r, ".17g"), name])
    if reference is not None:
        w.writerow(["inf", format(reference, ".17g"), "analytic"])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# exact expected populations


def expected_population(off: OffspringModel, life: LifetimeModel, n: int) -> np.ndarray:
    """``E(Z_n^(t) | Z_0 = e_1)`` for types ``t = 1..n+1``.

    Row 1 of ``(M^(n+1))**n``.  Exact: a newborn cannot reach an age above
    ``n`` in ``n`` seasons, so the truncation discards nothing.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    M = truncated_matrix(off, life, n + 1)
    x = np.zeros(n + 1)
    x[0] = 1.0
    for _ in range(n):
        x = M.rmatvec(x)
    return x


def mean_total(
    off: OffspringModel, life: LifetimeModel, n: int, weights: np.ndarray | None = None
) -> float:
    """``E(w . Z_n | Z_0 = e_1)``; all-ones weights by default."""
    x = expected_population(off, life, n)
    if weights is None:
        return math.fsum(x)
    w = np.asarray(weights, dtype=float)
    if w.size < x.size:
        w = np.concatenate([w, np.zeros(x.size - w.size)])
    return math.fsum(x * w[: x.size])
