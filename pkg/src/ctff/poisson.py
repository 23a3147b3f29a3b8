"""Poisson mixture weights for uniformization series."""
from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln, pdtrc

from .errors import TruncationError


def _check_rate(rate: float) -> float:
    rate = float(rate)
    if not math.isfinite(rate) or rate < 0:
        raise ValueError(f"Poisson rate must be finite and >= 0, got {rate}")
    return rate


def poisson_tail(rate: float, l: int) -> float:
    """Probability of more than ``l`` events, ``R_l``."""
    rate = _check_rate(rate)
    if rate == 0:
        return 0.0
    return float(pdtrc(l, rate))


def poisson_weights(rate: float, l: int) -> tuple[np.ndarray, float]:
    """Weights ``exp(-rate) rate**k / k!`` for ``k = 0..l`` and the tail ``R_l``.

    Weights are evaluated in log space, so large rates do not underflow the
    leading factor.  The tail comes from the regularized incomplete gamma
    function rather than ``1 - sum``, which keeps it accurate far below 1e-16.
    """
    rate = _check_rate(rate)
    if l < 0:
        raise ValueError("truncation l must be >= 0")
    if rate == 0:
        w = np.zeros(l + 1)
        w[0] = 1.0
        return w, 0.0
    k = np.arange(l + 1)
    w = np.exp(-rate + k * math.log(rate) - gammaln(k + 1))
    return w, poisson_tail(rate, l)


def choose_truncation(rate: float, tail_tol: float, max_l: int | None = None) -> int:
    """Smallest ``l >= 1`` with ``R_l < tail_tol``.

    Raises
    ------
    TruncationError
        If ``max_l`` (default ``10 * (rate + 10)``) is reached first.
    """
    rate = _check_rate(rate)
    if rate == 0:
        return 1
    if max_l is None:
        max_l = int(10 * (rate + 10))
    # the tail is monotone in l: bisect instead of scanning
    lo = max(1, int(rate))
    if poisson_tail(rate, lo) < tail_tol:
        while lo > 1 and poisson_tail(rate, lo - 1) < tail_tol:
            lo -= 1
        return lo
    hi = lo
    while poisson_tail(rate, hi) >= tail_tol:
        if hi >= max_l:
            raise TruncationError(
                f"tail {poisson_tail(rate, max_l):.3g} still >= {tail_tol:g} at l = {max_l} (rate {rate:g})"
            )
        lo, hi = hi, min(max_l, 2 * hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if poisson_tail(rate, mid) < tail_tol:
            hi = mid
        else:
            lo = mid
    return hi
