"""Randomised verification sweeps shared by the CLI and the test suite.

Each sweep draws admissible instances from a seeded generator, evaluates a
theory quantity against its oracle and returns a ``SweepResult``. Failures
are recorded, never clamped.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import oracle, theory
from .integrator import Kernel, RngStream, coupling_decay
from .model import ConvexityProfile, KlmcParams, LogCoshPotential, PhaseState

CONTRACTION_SLACK = 1e-10
IDENTITY_TOL = 1e-10
LYAPUNOV_TOL = 1e-12
RATIO_SLACK = 1e-12


@dataclass(frozen=True)
class Instance:
    params: KlmcParams
    profile: ConvexityProfile
    spectrum: tuple
    mult: tuple

    @property
    def d(self) -> int:
        return int(sum(self.mult))


def random_instance(rng: np.random.Generator, condition: str = "linear", max_dim: int = 1000) -> Instance:
    """Draw ``(h, gamma, eta, spectrum)`` satisfying ``condition`` ("general" or "linear").

    ``eta`` is drawn below the ``h -> 0`` threshold of the condition and ``h``
    as a random fraction of the largest admissible step, so every draw is
    admissible by construction. The spectrum always contains ``alpha`` and
    ``beta``; multiplicities sum to a dimension in ``[1, max_dim]``.
    """
    gamma = 10 ** rng.uniform(-1.0, 1.5)
    beta = 10 ** rng.uniform(-1.0, 1.0)
    kappa = 10 ** rng.uniform(0.0, 2.0)
    profile = ConvexityProfile(beta / kappa, beta)
    # lhs(h -> 0): general (11/6) eta/gamma^2, linear 10 eta/gamma^2
    eta_cap = gamma**2 / (beta * (11.0 / 6.0 if condition == "general" else 10.0))
    eta = eta_cap * 10 ** rng.uniform(-2.0, math.log10(0.98))
    h_lim = theory.step_size_limit(gamma, eta, profile, condition)
    h = h_lim * 10 ** rng.uniform(-3.0, math.log10(0.999))
    n_inner = int(rng.integers(0, 4))
    inner = rng.uniform(profile.alpha, profile.beta, n_inner)
    spectrum = np.unique(np.concatenate([[profile.alpha, profile.beta], inner]))
    d = int(rng.integers(spectrum.size, max(max_dim, spectrum.size) + 1))
    mult = np.ones(spectrum.size, dtype=int)
    extra = rng.multinomial(d - spectrum.size, np.full(spectrum.size, 1.0 / spectrum.size))
    mult += extra
    return Instance(KlmcParams(h, gamma, eta), profile, tuple(spectrum.tolist()), tuple(int(m) for m in mult))


@dataclass
class SweepResult:
    name: str
    n: int
    failures: list = field(default_factory=list)
    worst: float = -math.inf
    rows: list = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failures

    def summary(self) -> dict:
        out = asdict(self)
        out.pop("rows")
        out["ok"] = self.ok
        out["failures"] = self.failures[:20]
        out["n_failures"] = len(self.failures)
        return out


def _instance_row(inst: Instance, lam, c_exact, rho_sq, e_pos, e_mom, bias, flags) -> dict:
    p = inst.params
    return dict(
        h=p.h,
        gamma=p.gamma,
        eta=p.eta,
        lambda_or_alpha=lam,
        beta=inst.profile.beta,
        c_exact=c_exact,
        rho_sq=rho_sq,
        e_pos=e_pos,
        e_mom=e_mom,
        exact_bias=bias,
        pass_flags=flags,
    )


def contraction_sweep(n: int, seed: int) -> SweepResult:
    """``rho^2 <= 1 - c_exact`` at a random eigenvalue, and ``c_linear <= c_exact``."""
    rng = np.random.default_rng([seed, 1])
    res = SweepResult("contraction", n)
    for i in range(n):
        inst = random_instance(rng, "general" if i % 2 else "linear", max_dim=1)
        p, prof = inst.params, inst.profile
        rep = theory.contraction_exact(p, prof)
        lam = float(rng.uniform(prof.alpha, prof.beta))
        rho_sq = oracle.exact_contraction_factor(p, lam)
        gap = rho_sq - (1.0 - rep.c_exact)
        ok_rho = rep.c_exact is not None and gap <= CONTRACTION_SLACK
        ok_lin = True
        if rep.condition_linear_ok:
            ok_lin = rep.c_linear <= rep.c_exact + CONTRACTION_SLACK
            res.worst = max(res.worst, rep.c_linear - rep.c_exact)
        res.worst = max(res.worst, gap)
        flags = ("rho" if ok_rho else "RHO_FAIL") + "|" + ("lin" if ok_lin else "LIN_FAIL")
        res.rows.append(_instance_row(inst, lam, rep.c_exact, rho_sq, "", "", "", flags))
        if not (ok_rho and ok_lin):
            res.failures.append({"index": i, "h": p.h, "gamma": p.gamma, "eta": p.eta, "lam": lam, "flags": flags})
    return res


def bias_sweep(n: int, seed: int) -> SweepResult:
    """``exact_bias <= E_pos + E_mom`` on random multi-mode quadratics."""
    rng = np.random.default_rng([seed, 2])
    res = SweepResult("bias", n)
    for i in range(n):
        inst = random_instance(rng, "linear")
        rep = theory.bias_bounds(inst.params, inst.profile, inst.d)
        b = oracle.exact_bias(inst.params, inst.spectrum, inst.mult)
        bound = rep.e_pos + rep.e_mom
        ok = b <= bound
        res.worst = max(res.worst, b / bound)
        res.rows.append(_instance_row(inst, inst.profile.alpha, "", "", rep.e_pos, rep.e_mom, b, "bias" if ok else "BIAS_FAIL"))
        if not ok:
            res.failures.append({"index": i, "exact_bias": b, "bound": bound})
    res.notes["max_ratio_exact_over_bound"] = res.worst
    return res


def identity_sweep(n: int, seed: int) -> SweepResult:
    """All polynomial/block identities at random ``(r, zeta)`` in ``(1e-3, 10)^2``."""
    rng = np.random.default_rng([seed, 3])
    res = SweepResult("identities", n)
    worst_by_key: dict = {}
    for i in range(n):
        r, z = 10 ** rng.uniform(-3.0, 1.0, 2)
        gamma = 10 ** rng.uniform(-1.0, 1.0)
        c = rng.uniform(0.0, 1.0)
        out = oracle.identity_suite(r, z, gamma, c)
        bad = [k for k, v in out.items() if k != "p6_sign" and not v <= IDENTITY_TOL]
        if out["p6_sign"] > 0.0:
            bad.append("p6_sign")
        for k, v in out.items():
            worst_by_key[k] = max(worst_by_key.get(k, -math.inf), v)
        if bad:
            res.failures.append({"index": i, "r": r, "zeta": z, "failed": bad})
    res.notes["worst_by_identity"] = worst_by_key
    res.worst = max(v for k, v in worst_by_key.items() if k != "p6_sign")
    return res


def lyapunov_sweep(n: int, seed: int) -> SweepResult:
    """Relative residual of the direct Lyapunov solve."""
    rng = np.random.default_rng([seed, 4])
    res = SweepResult("lyapunov", n)
    for i in range(n):
        inst = random_instance(rng, "general", max_dim=1)
        lam = float(rng.uniform(inst.profile.alpha, inst.profile.beta))
        sigma = oracle.lyapunov_stationary(inst.params, lam)
        resid = oracle.lyapunov_residual(inst.params, lam, sigma)
        res.worst = max(res.worst, resid)
        if not resid <= LYAPUNOV_TOL:
            res.failures.append({"index": i, "residual": resid})
    return res


def coupling_check(n_steps: int, seed: int, d: int = 10) -> SweepResult:
    """Coupled-chain ratios on a log-cosh-perturbed quadratic against ``1 - h eta alpha / gamma``."""
    rng = np.random.default_rng([seed, 5])
    spectrum = rng.uniform(0.5, 2.0, d)
    pot = LogCoshPotential(spectrum, s=1.0)
    prof = pot.profile
    gamma = 2.0
    eta = 0.5 * gamma**2 / (10.0 * prof.beta)
    # small enough that 10^4 steps stay above the underflow floor
    h = 0.1 * theory.step_size_limit(gamma, eta, prof, "linear")
    params = KlmcParams(h, gamma, eta)
    kernel = Kernel.build(params, pot)
    init1 = PhaseState(rng.normal(size=d) * 3.0, rng.normal(size=d))
    init2 = PhaseState(rng.normal(size=d) * 3.0, rng.normal(size=d))
    dec = coupling_decay(kernel, init1, init2, n_steps, RngStream(seed, 0))
    bound = 1.0 - theory.contraction_linear(params, prof)
    ratios = dec.ratios
    res = SweepResult("coupling", int(ratios.size))
    res.worst = float(ratios.max() - bound)
    bad = np.flatnonzero(ratios > bound + RATIO_SLACK)
    res.failures = [{"step": int(k) + 1, "ratio": float(ratios[k])} for k in bad[:20]]
    res.notes.update(bound=bound, log_rate=dec.log_rate, truncated=dec.truncated, h=h, gamma=gamma, eta=eta)
    return res


SUITES = {
    "contraction": contraction_sweep,
    "bias": bias_sweep,
    "identities": identity_sweep,
    "lyapunov": lyapunov_sweep,
}


def _run_suite(args):
    name, n, seed = args
    if name == "coupling":
        return coupling_check(n, seed)
    return SUITES[name](n, seed)


def run_all(n: int, seed: int, workers: int = 1, coupling_steps: int = 10_000) -> list[SweepResult]:
    """Run every suite; results come back in a fixed order whatever the pool does."""
    jobs = [(name, n, seed) for name in SUITES] + [("coupling", coupling_steps, seed)]
    if workers <= 1:
        return [_run_suite(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_suite, jobs))
