"""Closed-form calculators: validity conditions, contraction rates, bias bounds, planner.

Throughout, ``zeta = h*gamma``, ``delta = exp(-zeta)`` and ``r = eta*lam/gamma^2``
is the scaled Hessian eigenvalue. Expressions in ``1 - delta`` are written so
that they never subtract two O(1) numbers.
"""

from __future__ import annotations

import math
import threading
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import _numerics as nx
from ._numerics import golden_section_min, one_minus_exp, zeta_minus_one_minus_delta
from .errors import ConditionViolation, KlmcError
from .model import ConvexityProfile, KlmcParams

GRID_POINTS = 4096


# --------------------------------------------------------------------------
# validity conditions


def condition_general_lhs(params: KlmcParams) -> float:
    """``eta (2h/(3 gamma (1 - delta^2)) + 3/(2 gamma^2))``; compare with ``1/beta``."""
    h, g, eta = params.h, params.gamma, params.eta
    return eta * ((2.0 / 3.0) * h / (g * params.one_minus_delta_sq) + 1.5 / g**2)


def condition_linear_lhs(params: KlmcParams) -> float:
    """``eta (2h/(gamma (1 - delta)) + 6/gamma^2)``; compare with ``1/beta`` (strictly)."""
    h, g, eta = params.h, params.gamma, params.eta
    return eta * (2.0 * h / (g * params.one_minus_delta) + 6.0 / g**2)


def check_condition_general(params: KlmcParams, profile: ConvexityProfile) -> bool:
    return condition_general_lhs(params) <= 1.0 / profile.beta


def check_condition_linear(params: KlmcParams, profile: ConvexityProfile) -> bool:
    return condition_linear_lhs(params) < 1.0 / profile.beta


_LHS = {"general": condition_general_lhs, "linear": condition_linear_lhs}


def step_size_limit(gamma: float, eta: float, profile: ConvexityProfile, condition: str = "general") -> float:
    """Largest step size for which ``condition`` ("general" or "linear") holds.

    Both left-hand sides increase with ``h``, so the boundary is a single
    root, found by bracketing and Brent's method. Raises ``ConditionViolation``
    if the condition fails even as ``h -> 0``.
    """
    lhs = _LHS[condition]
    target = 1.0 / profile.beta
    g = lambda h: lhs(KlmcParams(h, gamma, eta)) - target  # noqa: E731
    lo = 1e-12 / gamma
    if g(lo) > 0.0:
        raise ConditionViolation(
            f"{condition} condition fails for every step size at gamma={gamma}, eta={eta}",
            reason=f"condition_{condition}_violated",
        )
    hi = 1.0 / gamma
    while g(hi) <= 0.0:
        lo, hi = hi, 2.0 * hi
    return brentq(g, lo, hi, xtol=1e-15, rtol=1e-15)


# --------------------------------------------------------------------------
# contraction polynomials


@dataclass(frozen=True)
class PolyCoeffs:
    """Coefficients of the three quadratics in ``r`` at fixed ``zeta``."""

    zeta: float
    a1: float
    b1: float
    e1: float
    b2: float
    e2: float
    b3: float
    e3: float


def poly_coeffs(zeta: float) -> PolyCoeffs:
    z = float(zeta)
    if not (math.isfinite(z) and z > 0.0):
        raise KlmcError(f"zeta must be finite and > 0, got {zeta!r}")
    omd = one_minus_exp(z)
    omd2 = one_minus_exp(2.0 * z)
    zdm = zeta_minus_one_minus_delta(z)
    one_plus = 2.0 - omd
    return PolyCoeffs(
        zeta=z,
        a1=(2.0 / 3.0) * z * z + 2.0 * omd * omd,
        # zeta - delta(1 - delta) = (zeta - (1 - delta)) + (1 - delta)^2
        b1=zdm + omd * omd,
        e1=0.5 * omd2,
        # -zeta(1 + delta) + (1 - delta^2) = -(1 + delta)(zeta - (1 - delta))
        b2=-one_plus * zdm,
        e2=0.5 * one_plus * one_plus,
        b3=-z * omd - omd * omd,
        e3=0.5 * omd * omd,
    )


def p1(r, zeta):
    c = poly_coeffs(zeta)
    r = np.asarray(r, dtype=float)
    return (-c.a1 * r + c.b1) * r + c.e1


def p2(r, zeta):
    c = poly_coeffs(zeta)
    r = np.asarray(r, dtype=float)
    return (c.a1 * r + c.b2) * r + c.e2


def p3(r, zeta):
    c = poly_coeffs(zeta)
    r = np.asarray(r, dtype=float)
    return (c.a1 * r + c.b3) * r + c.e3


def _rmax_parts(z: float) -> tuple[float, float]:
    """``(2 zeta (1 - delta^2), (4/3 - delta^2) zeta^2 + 2 delta (1 - delta) zeta + 3 (1 - delta)^2)``."""
    omd = one_minus_exp(z)
    omd2 = one_minus_exp(2.0 * z)
    delta = math.exp(-z)
    lin = 2.0 * z * omd2
    quad = (1.0 / 3.0 + omd2) * z * z + 2.0 * delta * omd * z + 3.0 * omd * omd
    return lin, quad


def discriminant_numerator(r, zeta):
    """``p1^2 - p2 p3`` in closed form: ``2 zeta (1 - delta^2) r - D r^2``."""
    lin, quad = _rmax_parts(float(zeta))
    r = np.asarray(r, dtype=float)
    return r * (lin - quad * r)


def c_minus(r, zeta):
    """Left root ``p1 - sqrt(p2 p3)`` of the quadratic ``c -> chi_{AC-B^2}``.

    Wherever ``p1 > 0`` the rationalised form
    ``(p1^2 - p2 p3)/(p1 + sqrt(p2 p3))`` is used with the closed-form
    numerator, which keeps full relative accuracy for small ``r`` and near
    ``r_max``. Accepts scalars or arrays.
    """
    c = poly_coeffs(zeta)
    r_arr = np.asarray(r, dtype=float)
    q1 = (-c.a1 * r_arr + c.b1) * r_arr + c.e1
    q2 = (c.a1 * r_arr + c.b2) * r_arr + c.e2
    q3 = (c.a1 * r_arr + c.b3) * r_arr + c.e3
    root = np.sqrt(np.maximum(q2 * q3, 0.0))
    num = discriminant_numerator(r_arr, c.zeta)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(q1 > 0.0, num / (q1 + root), q1 - root)
    return float(out) if out.ndim == 0 else out


def r_max(zeta: float) -> float:
    """Right end of the interval on which ``c_minus(., zeta) > 0``."""
    lin, quad = _rmax_parts(float(zeta))
    return lin / quad


def r_lin(zeta: float) -> float:
    """Largest ``r`` covered by the linear minorant ``c_minus >= zeta r``."""
    z = float(zeta)
    omd = one_minus_exp(z)
    return z * omd / (2.0 * z * z + 6.0 * omd * omd)


# --------------------------------------------------------------------------
# contraction reports


@dataclass(frozen=True)
class ContractionReport:
    condition_general_ok: bool
    condition_linear_ok: bool
    c_exact: float | None
    c_linear: float | None
    r_lo: float
    r_hi: float
    r_max: float
    r_lin: float
    argmin_r: float | None
    reason: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def linear_rate(params: KlmcParams, profile: ConvexityProfile) -> float:
    """``h eta alpha / gamma`` with no precondition check."""
    return params.h * params.eta * profile.alpha / params.gamma


def contraction_linear(params: KlmcParams, profile: ConvexityProfile) -> float:
    if not check_condition_linear(params, profile):
        raise ConditionViolation(
            f"linear-rate condition fails: {condition_linear_lhs(params):.6g} >= 1/beta = {1.0 / profile.beta:.6g}",
            reason="condition_linear_violated",
        )
    return linear_rate(params, profile)


def minimize_c_minus(r_lo: float, r_hi: float, zeta: float, n_grid: int = GRID_POINTS) -> tuple[float, float]:
    """``(argmin, min)`` of ``c_minus(., zeta)`` on ``[r_lo, r_hi]``.

    Dense grid (endpoints included) followed by golden-section refinement in
    the two cells around the best grid point.
    """
    if r_hi <= r_lo:
        return r_lo, c_minus(r_lo, zeta)
    grid = np.linspace(r_lo, r_hi, n_grid)
    vals = c_minus(grid, zeta)
    i = int(np.argmin(vals))
    best_r, best_c = float(grid[i]), float(vals[i])
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, n_grid - 1)]
    r_ref, c_ref = golden_section_min(lambda t: c_minus(t, zeta), float(a), float(b), rtol=1e-12)
    if c_ref < best_c:
        best_r, best_c = r_ref, c_ref
    for r_end in (r_lo, r_hi):
        c_end = c_minus(r_end, zeta)
        if c_end < best_c:
            best_r, best_c = r_end, c_end
    return best_r, best_c


def contraction_exact(params: KlmcParams, profile: ConvexityProfile) -> ContractionReport:
    """Worst-case contraction coefficient over the Hessian spectrum ``[alpha, beta]``."""
    z = params.zeta
    r_lo, r_hi = params.r_of(profile.alpha), params.r_of(profile.beta)
    gen_ok = check_condition_general(params, profile)
    lin_ok = check_condition_linear(params, profile)
    c_exact = argmin = None
    reason = None
    if gen_ok:
        argmin, c_exact = minimize_c_minus(r_lo, r_hi, z)
    else:
        reason = "condition_general_violated"
    return ContractionReport(
        condition_general_ok=gen_ok,
        condition_linear_ok=lin_ok,
        c_exact=c_exact,
        c_linear=linear_rate(params, profile) if lin_ok else None,
        r_lo=r_lo,
        r_hi=r_hi,
        r_max=r_max(z),
        r_lin=r_lin(z),
        argmin_r=argmin,
        reason=reason,
    )


# --------------------------------------------------------------------------
# bias


def f_pos(zeta):
    """``zeta^2 - 3 + e^{-2 zeta}(3 + 6 zeta + 5 zeta^2 + 2 zeta^3)``."""
    return nx.f_pos(zeta)


def f_mom(zeta):
    """``1 - e^{-2 zeta}(1 + 2 zeta + 2 zeta^2)``."""
    return nx.f_mom(zeta)


def f_mom_prime(zeta):
    z = np.asarray(zeta, dtype=float)
    out = 4.0 * z * z * np.exp(-2.0 * z)
    return float(out) if out.ndim == 0 else out


def f_pos_prime(zeta):
    """``2 zeta f_mom(zeta)``."""
    z = np.asarray(zeta, dtype=float)
    out = 2.0 * z * np.asarray(f_mom(z))
    return float(out) if out.ndim == 0 else out


def f_pos_second(zeta):
    """``2 f_mom + 8 zeta^3 e^{-2 zeta}``."""
    z = np.asarray(zeta, dtype=float)
    out = 2.0 * np.asarray(f_mom(z)) + 8.0 * z**3 * np.exp(-2.0 * z)
    return float(out) if out.ndim == 0 else out


def f_pos_third(zeta):
    """``-16 e^{-2 zeta} (zeta - 2) zeta^2``."""
    z = np.asarray(zeta, dtype=float)
    out = -16.0 * np.exp(-2.0 * z) * (z - 2.0) * z * z
    return float(out) if out.ndim == 0 else out


def bias_terms(params: KlmcParams, profile: ConvexityProfile, d: int) -> tuple[float, float]:
    """General position and momentum bias bounds, without checking any condition."""
    z = params.zeta
    scale = d * profile.kappa**2 * params.eta / (params.gamma**2 * z)
    return math.sqrt(0.5 * scale * f_pos(z)), math.sqrt(4.0 * scale * f_mom(z))


_crit_lock = threading.Lock()
_crit_value: float | None = None


def critical_residual(zeta: float) -> float:
    """``(2 zeta + 1)(2 zeta^2 + 1) - e^{2 zeta}``; its positive root is where
    the momentum bias bound, as a function of ``zeta`` at fixed ``gamma``, peaks."""
    return (2.0 * zeta + 1.0) * (2.0 * zeta * zeta + 1.0) - math.exp(2.0 * zeta)


def critical_zeta() -> float:
    """Positive root of ``critical_residual``; computed once, thread-safe."""
    global _crit_value
    if _crit_value is None:
        with _crit_lock:
            if _crit_value is None:
                _crit_value = brentq(critical_residual, 1.0, 3.0, xtol=1e-14, rtol=1e-15)
    return _crit_value


@dataclass(frozen=True)
class BiasReport:
    """Asymptotic bias bounds.

    ``e_pos_under`` uses the constant 4/15; ``e_pos_under_derived`` uses
    sqrt(4/15), which is what inserting ``f_pos <= 8 zeta^5/15`` into the
    general bound gives. Likewise ``e_mom_over`` carries the constant 4 and
    ``e_mom_over_derived`` the constant 2 obtained from ``f_mom <= 1``.
    """

    e_pos: float
    e_mom: float
    e_pos_under: float
    e_mom_under: float
    e_pos_over: float
    e_mom_over: float
    zeta_critical: float
    regime: str
    e_pos_under_derived: float
    e_mom_over_derived: float

    def to_dict(self) -> dict:
        return asdict(self)


def bias_bounds(params: KlmcParams, profile: ConvexityProfile, d: int) -> BiasReport:
    if int(d) < 1:
        raise KlmcError(f"dimension must be >= 1, got {d}")
    if not check_condition_linear(params, profile):
        raise ConditionViolation(
            "bias bounds need the linear-rate condition", reason="condition_linear_violated"
        )
    d = int(d)
    h, g, eta, z = params.h, params.gamma, params.eta, params.zeta
    e_pos, e_mom = bias_terms(params, profile, d)
    pre = math.sqrt(d) * profile.kappa * math.sqrt(eta)
    zc = critical_zeta()
    return BiasReport(
        e_pos=e_pos,
        e_mom=e_mom,
        e_pos_under=(4.0 / 15.0) * pre * g * h * h,
        e_mom_under=(4.0 / math.sqrt(3.0)) * pre * h,
        e_pos_over=pre * math.sqrt(h / g) / math.sqrt(2.0),
        e_mom_over=4.0 * pre / (math.sqrt(h) * g**1.5),
        zeta_critical=zc,
        regime="underdamped" if z < zc else "overdamped",
        e_pos_under_derived=math.sqrt(4.0 / 15.0) * pre * g * h * h,
        e_mom_over_derived=2.0 * pre / (math.sqrt(h) * g**1.5),
    )


# --------------------------------------------------------------------------
# complexity planner


@dataclass(frozen=True)
class ComplexityPlan:
    """Step size and iteration count reaching accuracy ``epsilon``.

    ``w0`` is a caller-supplied upper bound on the initial weighted
    Wasserstein distance to the discretised stationary law, which cannot be
    computed in general. ``n_required_by_contraction`` is the smallest ``n``
    with ``(1 - c_linear)^{n/2} w0 <= epsilon/3`` at ``h_star``, for comparison.
    """

    epsilon: float
    h_star: float
    n_star: int
    w0: float
    h0: float
    gamma: float
    eta: float
    alpha: float
    beta: float
    d: int
    h_branch: str
    n_branch: str
    h_candidates: dict
    n_candidates: dict
    log_factor: float
    n_required_by_contraction: int
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def complexity_plan(
    profile: ConvexityProfile, d: int, epsilon: float, gamma: float, eta: float, h0: float, w0: float
) -> ComplexityPlan:
    for name, val in (("epsilon", epsilon), ("w0", w0)):
        if not (math.isfinite(val) and val > 0.0):
            raise KlmcError(f"{name} must be finite and > 0, got {val!r}")
    if int(d) < 1:
        raise KlmcError(f"dimension must be >= 1, got {d}")
    d = int(d)
    p0 = KlmcParams(h0, gamma, eta)
    if not check_condition_linear(p0, profile):
        try:
            h_ok = step_size_limit(gamma, eta, profile, "linear")
            hint = f"shrink h0 below {h_ok:.6g}"
        except ConditionViolation:
            hint = "increase gamma or decrease eta; no step size works for this pair"
        raise ConditionViolation(
            f"linear-rate condition fails at h0={h0}: {hint}", reason="condition_linear_violated"
        )
    alpha, kappa, eps = profile.alpha, profile.kappa, float(epsilon)
    h_cands = {
        "sqrt_eps": math.sqrt(5.0 / 4.0) * math.sqrt(eps) / (d**0.25 * math.sqrt(kappa) * eta**0.25 * math.sqrt(gamma)),
        "linear_eps": eps / (4.0 * math.sqrt(3.0) * math.sqrt(d) * kappa * math.sqrt(eta)),
        "h0": float(h0),
    }
    n_cands = {
        "sqrt_eps": math.sqrt(5.0) * gamma**1.5 * d**0.25 * math.sqrt(kappa) / (eta**0.75 * alpha * math.sqrt(eps)),
        "linear_eps": 8.0 * math.sqrt(3.0) * gamma * math.sqrt(d) * kappa / (math.sqrt(eta) * alpha * eps),
        "h0_gamma": float(h0) * gamma,
    }
    # ties resolve toward the h0 cap
    h_branch = min(("h0", "sqrt_eps", "linear_eps"), key=lambda k: h_cands[k])
    n_branch = max(n_cands, key=n_cands.get)
    h_star = h_cands[h_branch]
    log_factor = math.log(3.0 * w0 / eps)
    flags = ["n_bound_includes_h0_gamma_term", "w0_is_user_supplied_bound"]
    if log_factor <= 0.0:
        flags.append("w0_already_within_epsilon_over_3")
    n_star = max(1, math.ceil(n_cands[n_branch] * log_factor))
    c_lin = h_star * eta * alpha / gamma
    n_contr = max(1, math.ceil(2.0 / c_lin * log_factor))
    if h_branch == "sqrt_eps":
        flags.append("h_from_sqrt_eps_branch_relies_on_4_15_constant")
    return ComplexityPlan(
        epsilon=eps,
        h_star=h_star,
        n_star=n_star,
        w0=float(w0),
        h0=float(h0),
        gamma=float(gamma),
        eta=float(eta),
        alpha=profile.alpha,
        beta=profile.beta,
        d=d,
        h_branch=h_branch,
        n_branch=n_branch,
        h_candidates=h_cands,
        n_candidates=n_cands,
        log_factor=log_factor,
        n_required_by_contraction=n_contr,
        flags=flags,
    )


def plan_bias_check(plan: ComplexityPlan) -> dict:
    """Plug the planned step back into the general bias bound."""
    profile = ConvexityProfile(plan.alpha, plan.beta)
    params = KlmcParams(plan.h_star, plan.gamma, plan.eta)
    e_pos, e_mom = bias_terms(params, profile, plan.d)
    limit = 2.0 * plan.epsilon / 3.0
    return {"e_pos": e_pos, "e_mom": e_mom, "total": e_pos + e_mom, "limit": limit, "ok": e_pos + e_mom <= limit + 1e-9}


def standard_choices(beta: float) -> dict:
    """Two convenient ``(gamma, eta)`` pairs for which the linear-rate condition admits h of order one."""
    return {
        "strong_friction": (math.sqrt(27.0 * beta), 1.0),
        "scaled_mass": (math.sqrt(27.0 / 2.0), 1.0 / (2.0 * beta)),
    }
