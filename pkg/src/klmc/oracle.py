"""Exact analytics for quadratic targets and numeric checks of the contraction algebra.

On ``U(x) = sum_i lam_i x_i^2 / 2`` the kernel decouples into independent
2x2 linear-Gaussian systems, one per eigenvalue, so transition operators,
stationary laws and weighted Wasserstein distances are all available in
closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._numerics import one_minus_exp, zeta_minus_one_minus_delta
from .errors import KlmcError, NoStationaryLawError
from .integrator import noise_covariance
from .model import KlmcParams, WeightedNorm, norm_for
from .theory import c_minus, discriminant_numerator, poly_coeffs, r_lin

# --------------------------------------------------------------------------
# per-mode linear system


def transition_matrix(params: KlmcParams, lam: float) -> np.ndarray:
    """Deterministic one-step map of ``(x, v)`` for a single quadratic mode."""
    if not lam > 0.0:
        raise KlmcError(f"eigenvalue must be > 0, got {lam!r}")
    g, eta, z = params.gamma, params.eta, params.zeta
    omd = one_minus_exp(z)
    return np.array(
        [
            [1.0 - eta * lam * zeta_minus_one_minus_delta(z) / g**2, omd / g],
            [-eta * lam * omd / g, math.exp(-z)],
        ]
    )


@dataclass(frozen=True, eq=False)
class ModeSystem:
    s: np.ndarray
    q: np.ndarray
    lam: float

    @classmethod
    def build(cls, params: KlmcParams, lam: float) -> "ModeSystem":
        return cls(transition_matrix(params, lam), noise_covariance(params).matrix, float(lam))

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.s))))


@dataclass(frozen=True)
class BlockResult:
    a: float
    b: float
    c: float
    residual: float


def block_matrices(params: KlmcParams, lam: float, c: float) -> BlockResult:
    """Closed-form entries of ``(1 - c) G - S^T G S`` plus their discrepancy
    against direct assembly (max absolute entry-wise difference)."""
    g, z = params.gamma, params.zeta
    delta = math.exp(-z)
    omd = one_minus_exp(z)
    omd2 = one_minus_exp(2.0 * z)
    big_r = params.r_of(lam)
    a = (-z * z - 3.0 * omd * omd) * big_r**2 + 2.0 * z * big_r - c
    b = (z - 3.0 * delta * delta + 3.0 * delta) * big_r / g - c / g
    cc = -(4.0 * c - 3.0 * omd2) / g**2
    gram = norm_for(g).gram
    s = transition_matrix(params, lam)
    direct = (1.0 - c) * gram - s.T @ gram @ s
    formula = np.array([[a, b], [b, cc]])
    return BlockResult(a, b, cc, float(np.max(np.abs(direct - formula))))


@dataclass(frozen=True)
class ChiValues:
    chi_a: float
    chi_acmb2: float


def chi_eval(r, zeta, gamma, c) -> ChiValues:
    """Characteristic functions whose values at ``r = R(lam)`` are the
    scalar blocks ``A`` and ``AC - B^2`` of the one-mode Lyapunov difference."""
    z = float(zeta)
    omd = one_minus_exp(z)
    omd2 = one_minus_exp(2.0 * z)
    delta = math.exp(-z)
    r = np.asarray(r, dtype=float)
    chi_a = (-z * z - 3.0 * omd * omd) * r * r + 2.0 * z * r - c
    lin_c = 4.0 * (3.0 * omd * omd + z * z) * r * r + 6.0 * (delta * omd - z) * r - 3.0 * omd2
    const = (-9.0 * omd * omd + z * z * (3.0 * delta * delta - 4.0) - 6.0 * z * delta * omd) * r * r + 6.0 * z * omd2 * r
    chi_acmb2 = (3.0 * c * c + lin_c * c + const) / gamma**2
    return ChiValues(chi_a, chi_acmb2)


# --------------------------------------------------------------------------
# identity suite


def _rel(lhs, rhs, *terms):
    scale = sum(np.abs(t) for t in terms) + np.abs(lhs) + np.abs(rhs)
    scale = np.where(scale > 0, scale, 1.0)
    return np.abs(lhs - rhs) / scale


def aux_coeffs(zeta: float) -> dict:
    """Coefficients of the auxiliary quadratics used by the positivity arguments."""
    z = float(zeta)
    omd = one_minus_exp(z)
    omd2 = one_minus_exp(2.0 * z)
    delta = math.exp(-z)
    # 3 delta (2 - delta)((1 - delta)^2 + 1) - 3 = -3 (1 - delta)^4, since delta (2 - delta) = 1 - (1 - delta)^2
    a5 = -3.0 * omd**4 - z**4 / 3.0 - 2.0 * z * z * omd * omd
    b5_terms = (-6.0 * delta * omd**3, (2.0 / 3.0) * z**3, -2.0 * z * z * delta * omd, 2.0 * z * omd * omd)
    e5_terms = (-3.0 * delta * delta * omd * omd, -z * z / 3.0, 2.0 * z * delta * omd)
    b5, e5 = sum(b5_terms), sum(e5_terms)
    # magnitude scales for the cancelling sums
    b5_scale = sum(abs(t) for t in b5_terms)
    e5_scale = sum(abs(t) for t in e5_terms)
    a6 = (4.0 / 3.0) * z**3 + 4.0 * z * omd * omd
    b6 = 3.0 * omd * omd + z * z * (7.0 / 3.0 - delta * delta)
    e6 = z * omd2
    a7 = (2.0 / 9.0) * (1.0 + 3.0 * delta) * omd * (2.0 - omd)
    b7 = 2.0 * omd**3 * (1.0 + 2.0 * delta)
    return dict(a5=a5, b5=b5, e5=e5, b5_scale=b5_scale, e5_scale=e5_scale, a6=a6, b6=b6, e6=e6, a7=a7, b7=b7)


def identity_suite(r, zeta, gamma: float = 1.0, c: float = 0.25) -> dict:
    """Relative residuals of the polynomial and block identities at ``(r, zeta)``.

    Each residual is ``|lhs - rhs|`` divided by the sum of magnitudes of the
    terms involved, so it measures agreement relative to the size of the
    cancelling quantities. Keys:

    ``discriminant``  normalised discriminant of ``c -> chi_{AC-B^2}`` equals ``p2 p3``
    ``cminus_root``   ``chi_{AC-B^2}`` vanishes at ``c_minus``
    ``p5``            ``(p1 - p4)^2 - p2 p3 = p5 r^2``
    ``p5_disc``       ``b5^2 - 4 a5 e5 = 0``
    ``p6``            ``(p1 - zeta r)^2 - p2 p3 = p6 r``
    ``p7``            the numerator ``n7`` equals ``a7 zeta^4 + b7 zeta^2``
    ``p6_at_rlin``    ``p6(r_lin)`` equals ``n7`` up to a positive factor
    ``p6_sign``       ``max(-p6(r_lin), p6'(r_lin))``, non-positive when the sign claims hold
    ``block``         closed-form blocks vs direct assembly at ``lam = r gamma^2``, ``eta = 1``
    """
    z = float(zeta)
    r = float(r)
    pc = poly_coeffs(z)
    ax = aux_coeffs(z)
    omd = one_minus_exp(z)
    delta = math.exp(-z)
    q1 = -pc.a1 * r * r + pc.b1 * r + pc.e1
    q2 = pc.a1 * r * r + pc.b2 * r + pc.e2
    q3 = pc.a1 * r * r + pc.b3 * r + pc.e3
    q23 = q2 * q3
    out = {}

    # chi * gamma^2 = 3 c^2 + B c + C; roots are (-B/6) +- sqrt((B/6)^2 - C/3)
    bq = 4.0 * (3.0 * omd * omd + z * z) * r * r + 6.0 * (delta * omd - z) * r - 3.0 * one_minus_exp(2.0 * z)
    cq = (-9.0 * omd * omd + z * z * (3.0 * delta * delta - 4.0) - 6.0 * z * delta * omd) * r * r + 6.0 * z * one_minus_exp(2.0 * z) * r
    disc = (bq / 6.0) ** 2 - cq / 3.0
    out["discriminant"] = float(_rel(disc, q23, (bq / 6.0) ** 2, cq / 3.0))
    cm = c_minus(r, z)
    chi = chi_eval(r, z, 1.0, cm).chi_acmb2
    out["cminus_root"] = float(abs(chi) / (3.0 * cm * cm + abs(bq * cm) + abs(cq) + 1e-300))

    p4 = (-z * z - 3.0 * omd * omd) * r * r + 2.0 * z * r
    p5 = ax["a5"] * r * r + ax["b5"] * r + ax["e5"]
    lhs5 = (q1 - p4) ** 2 - q23
    out["p5"] = float(_rel(lhs5, p5 * r * r, (q1 - p4) ** 2, q23))
    out["p5_disc"] = float(
        abs(ax["b5"] ** 2 - 4.0 * ax["a5"] * ax["e5"])
        / (ax["b5_scale"] ** 2 + 4.0 * abs(ax["a5"]) * ax["e5_scale"])
    )

    p6 = ax["a6"] * r * r - ax["b6"] * r + ax["e6"]
    lhs6 = (q1 - z * r) ** 2 - q23
    out["p6"] = float(_rel(lhs6, p6 * r, (q1 - z * r) ** 2, q23))

    # p6(r_lin) (2 zeta^2 + 6 w^2)^2 = 3 (3 w^2 + zeta^2) / zeta * n7, with w = 1 - delta
    den = 2.0 * z * z + 6.0 * omd * omd
    terms7 = ((4.0 / 9.0) * z**4 * omd * omd, (2.0 / 3.0) * z * z * omd * ax["b6"], ax["a6"] * ax["e6"])
    n7 = terms7[0] - terms7[1] + terms7[2]
    rl = r_lin(z)
    p6_rl = ax["a6"] * rl * rl - ax["b6"] * rl + ax["e6"]
    lhs7 = p6_rl * den * den * z / (3.0 * (3.0 * omd * omd + z * z))
    out["p7"] = float(_rel(n7, ax["a7"] * z**4 + ax["b7"] * z * z, *terms7))
    out["p6_at_rlin"] = float(_rel(lhs7, n7, *terms7))
    dp6_rl = 2.0 * ax["a6"] * rl - ax["b6"]
    out["p6_sign"] = float(max(-p6_rl, dp6_rl))

    blk = block_matrices(KlmcParams(z / gamma, gamma, 1.0), r * gamma**2, c)
    scale = abs(blk.a) + abs(blk.b) + abs(blk.c) + 1.0 / gamma**2 + 1.0
    out["block"] = blk.residual / scale
    return out


# --------------------------------------------------------------------------
# stationary laws


def lyapunov_stationary(params: KlmcParams, lam: float) -> np.ndarray:
    """Solve ``Sigma = S Sigma S^T + Q`` for one mode via the 3x3 system on
    ``(Sigma_xx, Sigma_xv, Sigma_vv)``."""
    sysm = ModeSystem.build(params, lam)
    if sysm.spectral_radius >= 1.0:
        raise NoStationaryLawError(f"spectral radius {sysm.spectral_radius:.6g} >= 1 at lam={lam}")
    (s11, s12), (s21, s22) = sysm.s
    m = np.array(
        [
            [s11 * s11, 2.0 * s11 * s12, s12 * s12],
            [s11 * s21, s11 * s22 + s12 * s21, s12 * s22],
            [s21 * s21, 2.0 * s21 * s22, s22 * s22],
        ]
    )
    q = sysm.q
    rhs = np.array([q[0, 0], q[0, 1], q[1, 1]])
    sxx, sxv, svv = np.linalg.solve(np.eye(3) - m, rhs)
    return np.array([[sxx, sxv], [sxv, svv]])


def lyapunov_fixed_point(params: KlmcParams, lam: float, tol: float = 1e-15, max_iter: int = 10**6) -> np.ndarray:
    """Independent oracle: iterate ``Sigma <- S Sigma S^T + Q`` from zero."""
    sysm = ModeSystem.build(params, lam)
    s, q = sysm.s, sysm.q
    sigma = np.zeros((2, 2))
    for _ in range(max_iter):
        nxt = s @ sigma @ s.T + q
        if np.max(np.abs(nxt - sigma)) <= tol * max(np.max(np.abs(nxt)), 1e-300):
            return nxt
        sigma = nxt
    raise NoStationaryLawError("fixed-point iteration did not converge")


def lyapunov_residual(params: KlmcParams, lam: float, sigma: np.ndarray) -> float:
    sysm = ModeSystem.build(params, lam)
    res = sigma - sysm.s @ sigma @ sysm.s.T - sysm.q
    return float(np.max(np.abs(res)) / np.max(np.abs(sigma)))


@dataclass(frozen=True, eq=False)
class GaussianLaw:
    """Product Gaussian over modes: mode ``i`` has eigenvalue ``spectrum[i]``,
    multiplicity ``mult[i]``, per-coordinate mean ``mean[i]`` (2-vector) and
    2x2 covariance ``cov[i]``."""

    spectrum: np.ndarray
    mult: np.ndarray
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        lams = np.asarray(self.spectrum, dtype=float).reshape(-1)
        mult = np.asarray(self.mult, dtype=np.int64).reshape(-1)
        mean = np.asarray(self.mean, dtype=float).reshape(-1, 2)
        cov = np.asarray(self.cov, dtype=float).reshape(-1, 2, 2)
        k = lams.size
        if not (mult.size == k and mean.shape[0] == k and cov.shape[0] == k) or k == 0:
            raise KlmcError("spectrum, multiplicities, means and covariances must align")
        if (mult < 1).any():
            raise KlmcError("multiplicities must be >= 1")
        sym = np.abs(cov - np.swapaxes(cov, 1, 2)).max(axis=(1, 2))
        if (sym > 1e-14 * np.maximum(np.abs(cov).max(axis=(1, 2)), 1.0)).any():
            raise KlmcError("covariances must be symmetric")
        tr = cov[:, 0, 0] + cov[:, 1, 1]
        det = cov[:, 0, 0] * cov[:, 1, 1] - cov[:, 0, 1] ** 2
        lam_min = 0.5 * tr - np.sqrt(np.maximum(0.25 * tr * tr - det, 0.0))
        if (lam_min < -1e-12).any():
            raise KlmcError("covariance is not positive semidefinite")
        for name, val in (("spectrum", lams), ("mult", mult), ("mean", mean), ("cov", cov)):
            val.flags.writeable = False
            object.__setattr__(self, name, val)

    @property
    def dim(self) -> int:
        return int(self.mult.sum())


def _modes(spectrum) -> tuple[np.ndarray, np.ndarray]:
    lam = np.asarray(spectrum, dtype=float).reshape(-1)
    if lam.size == 0 or (lam <= 0).any() or not np.isfinite(lam).all():
        raise KlmcError("spectrum must be non-empty, finite and positive")
    uniq, counts = np.unique(lam, return_counts=True)
    return uniq, counts


def target_law(spectrum, eta: float, mult=None) -> GaussianLaw:
    """Continuous-time stationary law: ``x ~ N(0, 1/lam)``, ``v ~ N(0, eta)`` per mode."""
    lam, cnt = _modes(spectrum) if mult is None else (np.asarray(spectrum, float), np.asarray(mult))
    cov = np.zeros((lam.size, 2, 2))
    cov[:, 0, 0] = 1.0 / lam
    cov[:, 1, 1] = eta
    return GaussianLaw(lam, cnt, np.zeros((lam.size, 2)), cov)


def stationary_law(params: KlmcParams, spectrum, mult=None) -> GaussianLaw:
    """Exact stationary law of the discretised chain on the quadratic target."""
    lam, cnt = _modes(spectrum) if mult is None else (np.asarray(spectrum, float), np.asarray(mult))
    cov = np.array([lyapunov_stationary(params, float(l)) for l in lam])
    return GaussianLaw(lam, cnt, np.zeros((lam.size, 2)), cov)


def _det2(m: np.ndarray) -> np.ndarray:
    return np.maximum(m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0], 0.0)


def sqrtm_psd_2x2(m: np.ndarray, det=None) -> np.ndarray:
    """Principal square root of a symmetric PSD 2x2 matrix (stacked on axis 0 allowed).

    Uses ``sqrt(M) = (M + sqrt(det) I) / sqrt(tr + 2 sqrt(det))``. Pass ``det``
    when it is known more accurately than the entries of an ill-conditioned ``M``.
    """
    m = np.asarray(m, dtype=float)
    det = _det2(m) if det is None else np.maximum(np.asarray(det, dtype=float), 0.0)
    sdet = np.sqrt(det)
    t = np.sqrt(np.maximum(m[..., 0, 0] + m[..., 1, 1] + 2.0 * sdet, 0.0))
    out = m.copy()
    out[..., 0, 0] += sdet
    out[..., 1, 1] += sdet
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(t[..., None, None] > 0, out / t[..., None, None], 0.0)
    return out


def bures_sq(c1: np.ndarray, c2: np.ndarray, det1=None, det2=None) -> np.ndarray:
    """``tr(C1 + C2 - 2 (C2^{1/2} C1 C2^{1/2})^{1/2})`` for stacked 2x2 PSD matrices.

    Optional ``det1``/``det2`` override the determinants computed from the entries.
    """
    det1 = _det2(c1) if det1 is None else np.asarray(det1, dtype=float)
    det2 = _det2(c2) if det2 is None else np.asarray(det2, dtype=float)
    r2 = sqrtm_psd_2x2(c2, det2)
    inner = r2 @ c1 @ r2
    inner = 0.5 * (inner + np.swapaxes(inner, -1, -2))
    cross = sqrtm_psd_2x2(inner, np.maximum(det1, 0.0) * np.maximum(det2, 0.0))
    tr = lambda a: a[..., 0, 0] + a[..., 1, 1]  # noqa: E731
    return np.maximum(tr(c1) + tr(c2) - 2.0 * tr(cross), 0.0)


def gaussian_w(norm: WeightedNorm, law1: GaussianLaw, law2: GaussianLaw) -> float:
    """Wasserstein-2 distance under ``|.|_{a,b}`` between two mode-aligned Gaussian laws."""
    if not (np.array_equal(law1.spectrum, law2.spectrum) and np.array_equal(law1.mult, law2.mult)):
        raise KlmcError("laws must share the same mode structure")
    t = norm.factor
    dm = (law1.mean - law2.mean) @ t.T
    c1 = t @ law1.cov @ t.T
    c2 = t @ law2.cov @ t.T
    # the transform squeezes the covariances, so take determinants before it
    det_t = (t[0, 0] * t[1, 1]) ** 2
    per_mode = np.sum(dm * dm, axis=1) + bures_sq(c1, c2, det_t * _det2(law1.cov), det_t * _det2(law2.cov))
    return float(math.sqrt(max(float(np.sum(law1.mult * per_mode)), 0.0)))


def exact_contraction_factor(params: KlmcParams, lam: float, norm: WeightedNorm | None = None) -> float:
    """Squared operator norm of ``T S T^{-1}``: the worst one-step ratio of
    ``|z1 - z2|^2_{a,b}`` under synchronous coupling on mode ``lam``."""
    norm = norm_for(params.gamma) if norm is None else norm
    t = norm.factor
    s = transition_matrix(params, lam)
    m = t @ s @ np.linalg.inv(t)
    return float(np.linalg.eigvalsh(m.T @ m)[-1])


def exact_bias(params: KlmcParams, spectrum, mult=None) -> float:
    """``W_{a,b}`` between the chain's stationary law and the target on a quadratic."""
    norm = norm_for(params.gamma)
    return gaussian_w(norm, stationary_law(params, spectrum, mult), target_law(spectrum, params.eta, mult))


SWEEP_COLUMNS = (
    "h",
    "gamma",
    "eta",
    "lambda_or_alpha",
    "beta",
    "c_exact",
    "rho_sq",
    "e_pos",
    "e_mom",
    "exact_bias",
    "pass_flags",
)


__all__ = [
    "BlockResult",
    "ChiValues",
    "GaussianLaw",
    "ModeSystem",
    "SWEEP_COLUMNS",
    "aux_coeffs",
    "block_matrices",
    "bures_sq",
    "chi_eval",
    "discriminant_numerator",
    "exact_bias",
    "exact_contraction_factor",
    "gaussian_w",
    "identity_suite",
    "lyapunov_fixed_point",
    "lyapunov_residual",
    "lyapunov_stationary",
    "sqrtm_psd_2x2",
    "stationary_law",
    "target_law",
    "transition_matrix",
]
