"""Summation of nonnegative power series with a certified tail bound.

Terms are supplied in log space so that ``Q_j * s**j`` can be summed for
large ``j`` without overflow or underflow.
"""

from __future__ import annotations

import math
from typing import Callable, NamedTuple, Optional

import numpy as np

SERIES_RTOL = 1e-14
DIVERGENCE_CAP = 1e12
MAX_TERMS = 1 << 22

LogTerm = Callable[[np.ndarray], np.ndarray]
RatioBound = Callable[[int], float]
TailBound = Callable[[int], Optional[float]]


class SeriesSum(NamedTuple):
    value: float
    tail: float  # upper bound on the neglected remainder (0 when exact)
    terms: int

    @property
    def diverged(self) -> bool:
        return math.isinf(self.value)

    @property
    def log_value(self) -> float:
        return math.log(self.value) if self.value > 0 else -math.inf


DIVERGED = SeriesSum(math.inf, math.inf, 0)


def sum_log_series(
    log_term: LogTerm,
    start: int,
    *,
    stop: int | None = None,
    ratio_bound: RatioBound | None = None,
    tail_bound: TailBound | None = None,
    rtol: float = SERIES_RTOL,
    cap: float = DIVERGENCE_CAP,
    max_terms: int = MAX_TERMS,
) -> SeriesSum:
    """Sum ``exp(log_term(j))`` for ``j = start, start+1, ...``.

    ``stop`` (inclusive) makes the sum finite and exact.  Otherwise the
    remainder after index ``N`` is bounded either by a geometric majorant,
    ``t_N * r / (1 - r)`` with ``r = ratio_bound(N)`` an upper bound on every
    later term ratio, or by ``tail_bound(N)`` when the caller has a better
    (polynomial) estimate.  A ``tail_bound`` returning ``None`` means the
    series is known to diverge.

    Summation stops once the remainder bound falls below ``rtol`` times the
    partial sum; partial sums above ``cap`` are reported as divergence.
    """
    if stop is not None and stop < start:
        return SeriesSum(0.0, 0.0, 0)

    chunk = 256
    j0 = start
    scale: float | None = None
    parts: list[float] = []
    n = 0
    while True:
        j1 = j0 + chunk - 1
        if stop is not None:
            j1 = min(j1, stop)
        j = np.arange(j0, j1 + 1, dtype=np.int64)
        lt = np.asarray(log_term(j), dtype=float)
        if scale is None:
            finite = lt[np.isfinite(lt)]
            scale = float(finite.max()) if finite.size else 0.0
        if np.any(lt == np.inf):
            return DIVERGED
        parts.append(float(np.exp(lt - scale).sum()))
        n += j.size
        partial = math.fsum(parts)
        value = partial * math.exp(scale) if partial > 0 else 0.0
        if value > cap:
            return DIVERGED
        if stop is not None and j1 >= stop:
            return SeriesSum(value, 0.0, n)

        last = float(np.exp(lt[-1] - scale))
        if tail_bound is not None:
            bound = tail_bound(int(j1))
            if bound is None:
                return DIVERGED
            tail = bound
        else:
            r = ratio_bound(int(j1)) if ratio_bound is not None else math.inf
            tail = last * r / (1.0 - r) * math.exp(scale) if r < 1.0 else math.inf
        if tail <= rtol * value or (value == 0.0 and last == 0.0 and tail == 0.0):
            return SeriesSum(value, tail, n)
        if n >= max_terms:
            return SeriesSum(value, tail, n)
        j0 = j1 + 1
        chunk = min(chunk * 2, 1 << 20)


def poly_tail(coef: float, exponent: float, n: int) -> float | None:
    """Bound ``sum_{j>n} coef * j**exponent`` by the integral from ``n``.

    Returns ``None`` when the sum diverges (``exponent >= -1``).
    """
    if exponent >= -1.0:
        return None
    return coef * n ** (exponent + 1.0) / (-exponent - 1.0)
