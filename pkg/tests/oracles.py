"""Independent float oracles for slopes with prescribed kneading data."""

import numpy as np
from scipy.optimize import brentq


def counterexample_slope(k: int) -> float:
    """Root of ``lam^(k-1) (1 - lam/2) (1 + lam + lam^2) = 1``.

    With kneading ``1 0^k (110)^inf`` the iterate ``T^(k+2)(c)`` is the
    period-3 point ``lam^2 / (1 + lam + lam^2)`` of itinerary ``(110)^inf``,
    while following the branches of ``1 0^k`` gives ``lam^(k+1) (1 - lam/2)``.
    """
    f = lambda lam: lam ** (k - 1) * (1 - lam / 2) * (1 + lam + lam * lam) - 1
    grid = np.linspace(1.3, 1.999, 800)
    vals = [f(x) for x in grid]
    for a, b, fa, fb in zip(grid, grid[1:], vals, vals[1:]):
        if fa * fb < 0:
            return brentq(f, a, b, xtol=1e-15)
    raise ValueError("no root")


def _follow(lam: float, word: str) -> float:
    x = lam / 2
    for sym in word:
        x = lam * x if sym == "0" else lam * (1 - x)
    return x


def _realizes(lam: float, word: str) -> bool:
    x = lam / 2
    for sym in word:
        if (x < 0.5) != (sym == "0"):
            return False
        x = lam * x if x < 0.5 else lam * (1 - x)
    return abs(x - 0.5) < 1e-9


def superstable_slope(period_word: str) -> float:
    """Slope in (1, 2) with ``T^m(c) = c`` along ``period_word`` (K = period_word^inf)."""
    body = period_word[:-1]
    f = lambda lam: _follow(lam, body) - 0.5
    grid = np.linspace(1.01, 1.999, 4000)
    vals = [f(x) for x in grid]
    for a, b, fa, fb in zip(grid, grid[1:], vals, vals[1:]):
        if fa * fb < 0:
            lam = brentq(f, a, b, xtol=1e-15)
            if _realizes(lam, body):
                return lam
    raise ValueError(f"no superstable slope for {period_word}")
