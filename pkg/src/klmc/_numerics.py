"""Cancellation-safe scalar kernels shared by the integrator and the theory code.

Every function here is a difference of O(1) terms that vanishes to high order
as ``zeta -> 0``. Below a per-function threshold they switch to a Taylor
polynomial whose coefficients are generated exactly (``fractions.Fraction``)
at import time. Thresholds sit where the direct formula has already lost less
than ~1e-14 relative accuracy, so the two branches agree to ~1e-13 at the seam.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

N_TERMS = 40

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def exp_poly_coeffs(
    poly: Sequence[Fraction], rate: int, extra: Sequence[Fraction] = (), n_terms: int = N_TERMS
) -> list[Fraction]:
    """Exact Taylor coefficients of ``extra(z) + exp(-rate z) * poly(z)`` around 0."""
    coeffs = []
    for n in range(n_terms):
        c = Fraction(0)
        for j, p in enumerate(poly):
            if j <= n:
                k = n - j
                c += p * Fraction((-rate) ** k, math.factorial(k))
        if n < len(extra):
            c += extra[n]
        coeffs.append(c)
    return coeffs


def _leading(coeffs: list[Fraction]) -> tuple[int, np.ndarray]:
    k0 = next(i for i, c in enumerate(coeffs) if c != 0)
    return k0, np.array([float(c) for c in coeffs[k0:]])


# z - 1 + exp(-z)
_ZDM1 = exp_poly_coeffs([Fraction(1)], 1, [Fraction(-1), Fraction(1)])
# z - 3/2 + 2 exp(-z) - exp(-2z)/2, i.e. z - 2(1 - e^-z) + (1 - e^-2z)/2
_SXX = [
    a + b
    for a, b in zip(
        exp_poly_coeffs([Fraction(2)], 1, [Fraction(-3, 2), Fraction(1)]),
        exp_poly_coeffs([Fraction(-1, 2)], 2),
    )
]
_FPOS = exp_poly_coeffs(
    [Fraction(3), Fraction(6), Fraction(5), Fraction(2)], 2, [Fraction(-3), Fraction(0), Fraction(1)]
)
_FMOM = exp_poly_coeffs([Fraction(-1), Fraction(-2), Fraction(-2)], 2, [Fraction(1)])

SERIES = {
    "zeta_minus_one_minus_delta": _leading(_ZDM1),
    "sxx_shape": _leading(_SXX),
    "f_pos": _leading(_FPOS),
    "f_mom": _leading(_FMOM),
}

THRESHOLDS = {
    "zeta_minus_one_minus_delta": 0.1,
    "sxx_shape": 0.5,
    "f_pos": 1.0,
    "f_mom": 0.5,
}


def _horner(z: np.ndarray, k0: int, c: np.ndarray) -> np.ndarray:
    acc = np.zeros_like(z)
    for coef in c[::-1]:
        acc = acc * z + coef
    return acc * z**k0


def _branch(name: str, direct: Callable[[np.ndarray], np.ndarray], z):
    z = np.asarray(z, dtype=float)
    tau = THRESHOLDS[name]
    k0, c = SERIES[name]
    small = z < tau
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.where(small, _horner(np.minimum(z, tau), k0, c), direct(np.maximum(z, tau)))
    return float(out) if out.ndim == 0 else out


def one_minus_exp(z):
    """``1 - exp(-z)`` without cancellation."""
    out = -np.expm1(-np.asarray(z, dtype=float))
    return float(out) if out.ndim == 0 else out


def zeta_minus_one_minus_delta(z):
    """``z - (1 - exp(-z))`` = ``z + delta - 1``; O(z^2) near 0."""
    return _branch("zeta_minus_one_minus_delta", lambda t: t + np.expm1(-t), z)


def sxx_shape(z):
    """``z - 2(1 - e^-z) + (1 - e^-2z)/2``; the position noise variance is ``2 eta/gamma^2`` times this."""
    return _branch("sxx_shape", lambda t: t + 2.0 * np.expm1(-t) - 0.5 * np.expm1(-2.0 * t), z)


def f_pos(z):
    """``z^2 - 3 + e^{-2z}(3 + 6z + 5z^2 + 2z^3)``; O(z^5) near 0."""
    return _branch(
        "f_pos", lambda t: t * t - 3.0 + np.exp(-2.0 * t) * (3.0 + t * (6.0 + t * (5.0 + 2.0 * t))), z
    )


def f_mom(z):
    """``1 - e^{-2z}(1 + 2z + 2z^2)``; O(z^3) near 0."""
    return _branch("f_mom", lambda t: -np.expm1(-2.0 * t) - np.exp(-2.0 * t) * (2.0 * t * (1.0 + t)), z)


def golden_section_min(
    f: Callable[[float], float], a: float, b: float, rtol: float = 1e-12, max_iter: int = 300
) -> tuple[float, float]:
    """Golden-section search for a minimum of ``f`` on ``[a, b]``.

    Returns ``(x, f(x))`` for the best point visited. Stops once the bracket
    width falls below ``rtol * max(|a|, |b|)`` (absolute 1e-300 floor).
    """
    a, b = min(a, b), max(a, b)
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    best = (c, fc) if fc <= fd else (d, fd)
    for _ in range(max_iter):
        if b - a <= max(rtol * max(abs(a), abs(b)), 1e-300):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
            if fc < best[1]:
                best = (c, fc)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
            if fd < best[1]:
                best = (d, fd)
    return best
