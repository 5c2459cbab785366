"""Stochastic exponential Euler kernel for kinetic Langevin dynamics.

One step from ``(x, v)`` with ``g = grad U(x)``::

    x' = x + (1 - delta)/gamma * v - eta (zeta + delta - 1)/gamma^2 * g + xi_x
    v' = delta * v - eta (1 - delta)/gamma * g + xi_v

where ``(xi_x, xi_v)`` is Gaussian per coordinate with the 2x2 covariance of
``NoiseCovariance`` and independent across coordinates.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._numerics import one_minus_exp, sxx_shape, zeta_minus_one_minus_delta
from .errors import DegenerateStepError, KlmcError, MomentOverflowError, PoisonedStateError
from .model import KlmcParams, PhaseState, Potential, norm_for

UNDERFLOW_FLOOR = 1e-300


@dataclass(frozen=True)
class NoiseCovariance:
    sxx2: float
    sxv2: float
    svv2: float
    l11: float
    l21: float
    l22: float

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.sxx2, self.sxv2], [self.sxv2, self.svv2]])

    @property
    def factor(self) -> np.ndarray:
        return np.array([[self.l11, 0.0], [self.l21, self.l22]])


def noise_covariance(params: KlmcParams) -> NoiseCovariance:
    z, g, eta = params.zeta, params.gamma, params.eta
    sxx2 = 2.0 * eta / g**2 * sxx_shape(z)
    sxv2 = eta / g * one_minus_exp(z) ** 2
    svv2 = eta * one_minus_exp(2.0 * z)
    if not (sxx2 > 0.0 and svv2 > 0.0):
        raise DegenerateStepError(
            f"noise covariance underflows at zeta={z!r} (sxx2={sxx2!r}, svv2={svv2!r}); increase h*gamma"
        )
    l11 = math.sqrt(sxx2)
    l21 = sxv2 / l11
    l22sq = svv2 - l21 * l21
    if not l22sq > 0.0:
        raise DegenerateStepError(f"noise covariance is numerically singular at zeta={z!r}")
    return NoiseCovariance(sxx2, sxv2, svv2, l11, l21, math.sqrt(l22sq))


@dataclass(frozen=True, eq=False)
class Kernel:
    params: KlmcParams
    potential: Potential
    cov: NoiseCovariance
    c_xv: float
    c_xg: float
    c_vv: float
    c_vg: float

    @classmethod
    def build(cls, params: KlmcParams, potential: Potential) -> "Kernel":
        z, g, eta = params.zeta, params.gamma, params.eta
        omd = one_minus_exp(z)
        return cls(
            params=params,
            potential=potential,
            cov=noise_covariance(params),
            c_xv=omd / g,
            c_xg=eta * zeta_minus_one_minus_delta(z) / g**2,
            c_vv=math.exp(-z),
            c_vg=eta * omd / g,
        )

    @property
    def dim(self) -> int:
        return self.potential.dim


def _advance(kernel: Kernel, x, v, n1, n2):
    g = kernel.potential.grad(x)
    if not np.isfinite(g).all():
        raise PoisonedStateError("gradient is not finite")
    cov = kernel.cov
    x_new = x + kernel.c_xv * v - kernel.c_xg * g + cov.l11 * n1
    v_new = kernel.c_vv * v - kernel.c_vg * g + (cov.l21 * n1 + cov.l22 * n2)
    return x_new, v_new


def _check_noise(kernel: Kernel, noise) -> np.ndarray:
    noise = np.asarray(noise, dtype=float)
    if noise.shape != (2, kernel.dim):
        raise KlmcError(f"noise must have shape (2, {kernel.dim}), got {noise.shape}")
    return noise


def step(kernel: Kernel, state: PhaseState, noise) -> PhaseState:
    """Advance ``state`` one step; ``noise`` holds 2 x d standard normal draws."""
    if state.dim != kernel.dim:
        raise KlmcError(f"state has dimension {state.dim}, potential has {kernel.dim}")
    noise = _check_noise(kernel, noise)
    return PhaseState(*_advance(kernel, state.x, state.v, noise[0], noise[1]))


def coupled_step(kernel: Kernel, s1: PhaseState, s2: PhaseState, noise) -> tuple[PhaseState, PhaseState]:
    """Advance two states with the same noise (synchronous coupling)."""
    if s1.dim != s2.dim:
        raise KlmcError("coupled states must share a dimension")
    return step(kernel, s1, noise), step(kernel, s2, noise)


@dataclass(frozen=True)
class RngStream:
    """Reproducible Gaussian stream keyed by ``(seed, stream_id)``.

    Backed by the counter-based Philox generator; distinct ``stream_id`` values
    give independent streams through ``SeedSequence`` spawn keys.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            val = int(getattr(self, name))
            if not 0 <= val < 2**64:
                raise KlmcError(f"{name} must be a 64-bit unsigned integer, got {val}")
            object.__setattr__(self, name, val)

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.Philox(ss))


def default_burn_in(kernel: Kernel) -> int:
    """Ten relaxation times ``gamma / (h eta alpha)`` of the linear contraction rate."""
    p = kernel.params
    return 10 * math.ceil(p.gamma / (p.h * p.eta * kernel.potential.profile.alpha))


@dataclass(eq=False)
class ChainResult:
    """Output of ``run_chain``.

    ``mean`` has shape (2, d) (rows: position, momentum); ``comoment`` has
    shape (2, 2, d) and holds centred sums of per-coordinate products.
    ``batch_second_moments`` (n_batches, 2, 2, d) holds per-batch averages of
    the raw products ``z_a z_b``; only complete batches are kept.
    ``trajectory`` rows are ``(step, x_0..x_{d-1}, v_0..v_{d-1})``.
    """

    final: PhaseState
    n_steps: int
    burn_in: int
    mean: np.ndarray
    comoment: np.ndarray
    trajectory: np.ndarray | None = None
    batch_second_moments: np.ndarray | None = field(default=None, repr=False)

    def covariance(self, ddof: int = 0) -> np.ndarray:
        return self.comoment / (self.n_steps - ddof)


def run_chain(
    kernel: Kernel,
    init: PhaseState,
    n_steps: int,
    stream: RngStream,
    *,
    burn_in: int | None = None,
    thin: int | None = None,
    batch_size: int | None = None,
    block: int = 8192,
) -> ChainResult:
    """Run one chain for ``burn_in + n_steps`` steps; moments cover the last ``n_steps``.

    Moments are merged block by block with the pairwise (Chan et al.) update,
    so no raw sums of squares are ever formed.
    """
    n_steps = int(n_steps)
    if n_steps < 1:
        raise KlmcError("n_steps must be >= 1")
    if init.dim != kernel.dim:
        raise KlmcError(f"init has dimension {init.dim}, potential has {kernel.dim}")
    burn_in = default_burn_in(kernel) if burn_in is None else int(burn_in)
    d = kernel.dim
    rng = stream.generator()
    cov = kernel.cov
    grad = kernel.potential.grad
    c_xv, c_xg, c_vv, c_vg = kernel.c_xv, kernel.c_xg, kernel.c_vv, kernel.c_vg

    x = init.x.copy()
    v = init.v.copy()
    count = 0
    mean = np.zeros((2, d))
    comoment = np.zeros((2, 2, d))
    rows = []
    batches = []
    batch_acc = np.zeros((2, 2, d))
    batch_fill = 0

    total = burn_in + n_steps
    done = 0
    while done < total:
        m = min(block, total - done)
        noise = rng.standard_normal((m, 2, d))
        xix = cov.l11 * noise[:, 0]
        xiv = cov.l21 * noise[:, 0] + cov.l22 * noise[:, 1]
        buf = np.empty((m, 2, d))
        for k in range(m):
            g = grad(x)
            x, v = x + c_xv * v - c_xg * g + xix[k], c_vv * v - c_vg * g + xiv[k]
            buf[k, 0] = x
            buf[k, 1] = v
        if not np.isfinite(buf).all():
            bad = int(np.argmin(np.isfinite(buf).reshape(m, -1).all(axis=1)))
            raise PoisonedStateError(f"non-finite state at step {done + bad + 1}", step=done + bad + 1)

        keep_from = max(0, burn_in - done)
        kept = buf[keep_from:]
        if kept.shape[0]:
            first_idx = done + keep_from - burn_in  # post-burn-in index of kept[0]
            n_b = kept.shape[0]
            with np.errstate(over="ignore", invalid="ignore"):
                mean_b = kept.mean(axis=0)
                cen = kept - mean_b
                com_b = np.einsum("kai,kbi->abi", cen, cen)
            n_new = count + n_b
            with np.errstate(over="ignore", invalid="ignore"):
                delta = mean_b - mean
                comoment = comoment + com_b + np.einsum("ai,bi->abi", delta, delta) * (count * n_b / n_new)
                mean = mean + delta * (n_b / n_new)
            count = n_new
            if not (np.isfinite(comoment).all() and np.isfinite(mean).all()):
                raise MomentOverflowError(f"moment overflow by step {done + m}", step=done + m)

            if thin:
                idx = np.arange(first_idx, first_idx + n_b)
                sel = (idx + 1) % thin == 0
                if sel.any():
                    rows.append(
                        np.column_stack([idx[sel] + 1, kept[sel, 0], kept[sel, 1]])
                    )
            if batch_size:
                j = 0
                while j < n_b:
                    take = min(batch_size - batch_fill, n_b - j)
                    chunk = kept[j : j + take]
                    batch_acc += np.einsum("kai,kbi->abi", chunk, chunk)
                    batch_fill += take
                    j += take
                    if batch_fill == batch_size:
                        batches.append(batch_acc / batch_size)
                        batch_acc = np.zeros((2, 2, d))
                        batch_fill = 0
        done += m

    traj = None
    if thin:
        traj = np.concatenate(rows) if rows else np.empty((0, 1 + 2 * d))
    return ChainResult(
        final=PhaseState(x, v),
        n_steps=count,
        burn_in=burn_in,
        mean=mean,
        comoment=comoment,
        trajectory=traj,
        batch_second_moments=np.array(batches) if batch_size else None,
    )


def _run_chain_star(args):
    kernel, init, n_steps, stream, kwargs = args
    return run_chain(kernel, init, n_steps, stream, **kwargs)


def run_chains(
    kernel: Kernel,
    inits: list[PhaseState],
    n_steps: int,
    seed: int,
    *,
    workers: int = 1,
    **kwargs,
) -> list[ChainResult]:
    """Independent chains on streams ``(seed, 0), (seed, 1), ...``; results in chain order."""
    jobs = [(kernel, init, n_steps, RngStream(seed, i), kwargs) for i, init in enumerate(inits)]
    if workers <= 1 or len(jobs) <= 1:
        return [_run_chain_star(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_chain_star, jobs))


@dataclass(eq=False)
class DecayResult:
    """Squared weighted distances ``|Z_k - Z'_k|^2_{a,b}`` for k = 0..n."""

    series: np.ndarray
    log_rate: float
    truncated: bool

    @property
    def ratios(self) -> np.ndarray:
        s = self.series
        with np.errstate(divide="ignore", invalid="ignore"):
            return s[1:] / s[:-1]


def coupling_decay(
    kernel: Kernel, init1: PhaseState, init2: PhaseState, n_steps: int, stream: RngStream
) -> DecayResult:
    """Follow two synchronously coupled chains and record their weighted distance.

    The difference is propagated directly (noise cancels exactly under the
    coupling), using ``Potential.grad_delta`` so that the series keeps full
    relative precision long after the two chains agree to machine epsilon.
    The reported ``log_rate`` is the least-squares slope of ``log series``
    against the step index.
    """
    if init1.dim != kernel.dim or init2.dim != kernel.dim:
        raise KlmcError("initial states must match the potential dimension")
    n_steps = int(n_steps)
    norm = norm_for(kernel.params.gamma)
    pot = kernel.potential
    x, v = init1.x.copy(), init1.v.copy()
    dx, dv = init1.x - init2.x, init1.v - init2.v
    series = np.zeros(n_steps + 1)
    series[0] = norm.sq(dx, dv)
    if series[0] == 0.0:
        return DecayResult(series, float("nan"), False)

    rng = stream.generator()
    truncated = False
    last = n_steps
    block = 4096
    k = 0
    while k < n_steps:
        m = min(block, n_steps - k)
        noise = rng.standard_normal((m, 2, kernel.dim))
        for j in range(m):
            gd = pot.grad_delta(x, dx)
            dx, dv = dx + kernel.c_xv * dv - kernel.c_xg * gd, kernel.c_vv * dv - kernel.c_vg * gd
            x, v = _advance(kernel, x, v, noise[j, 0], noise[j, 1])
            k += 1
            series[k] = norm.sq(dx, dv)
            if series[k] < UNDERFLOW_FLOOR:
                truncated = True
                last = k - 1
                break
        if truncated:
            break
    series = series[: last + 1]
    log_rate = float("nan")
    if series.size >= 2:
        ks = np.arange(series.size)
        log_rate = float(np.polyfit(ks, np.log(series), 1)[0])
    return DecayResult(series, log_rate, truncated)
