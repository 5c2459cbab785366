import math
from dataclasses import dataclass

import mpmath as mp
import numpy as np
import pytest
from scipy.linalg import expm

from klmc import oracle, theory
from klmc.errors import DegenerateStepError, KlmcError, MomentOverflowError, PoisonedStateError
from klmc.integrator import (
    Kernel,
    RngStream,
    coupled_step,
    coupling_decay,
    default_burn_in,
    noise_covariance,
    run_chain,
    run_chains,
    step,
)
from klmc.model import ConvexityProfile, KlmcParams, PhaseState, Potential, QuadraticPotential, norm_for


@dataclass(frozen=True, eq=False)
class FlatPotential(Potential):
    d: int = 2

    @property
    def dim(self):
        return self.d

    @property
    def profile(self):
        return ConvexityProfile(1.0, 1.0)

    def grad(self, x):
        return np.zeros_like(x)


@dataclass(frozen=True, eq=False)
class NanPotential(FlatPotential):
    def grad(self, x):
        return np.full_like(x, np.nan)


def van_loan_covariance(h, gamma, eta):
    """Covariance of the exact OU increment via the block-exponential identity."""
    a = np.array([[0.0, 1.0], [0.0, -gamma]])
    bbt = np.array([[0.0, 0.0], [0.0, 2.0 * gamma * eta]])
    m = np.zeros((4, 4))
    m[:2, :2] = -a
    m[:2, 2:] = bbt
    m[2:, 2:] = a.T
    e = expm(m * h)
    return e[2:, 2:].T @ e[:2, 2:]


def random_params(rng):
    h, g, eta = 10 ** rng.uniform(-3, 1, 3)
    return KlmcParams(h, g, eta)


def test_velocity_variance_at_unit_params():
    assert noise_covariance(KlmcParams(1.0, 1.0, 1.0)).svv2 == pytest.approx(1 - math.exp(-2), rel=1e-15)


def test_small_step_orders():
    covs = [noise_covariance(KlmcParams(h, 1.0, 1.0)) for h in (1e-3, 1e-4)]
    assert covs[0].sxx2 / covs[1].sxx2 == pytest.approx(1e3, rel=1e-2)
    assert covs[0].sxv2 / covs[1].sxv2 == pytest.approx(1e2, rel=1e-2)
    assert covs[0].svv2 / covs[1].svv2 == pytest.approx(1e1, rel=1e-2)


def test_factor_reconstruction_and_definiteness():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        cov = noise_covariance(random_params(rng))
        lf = cov.factor
        rec = lf @ lf.T
        assert np.max(np.abs(rec - cov.matrix)) <= 1e-14 * np.max(np.abs(cov.matrix))
        assert cov.sxx2 * cov.svv2 - cov.sxv2**2 > 0


def test_covariance_matches_block_exponential():
    rng = np.random.default_rng(12)
    for _ in range(200):
        p = random_params(rng)
        if p.zeta > 5:  # the block exponential loses digits to e^{zeta} growth beyond this
            continue
        ref = van_loan_covariance(p.h, p.gamma, p.eta)
        np.testing.assert_allclose(noise_covariance(p).matrix, ref, rtol=1e-9, atol=1e-300)


def test_covariance_matches_high_precision_everywhere():
    rng = np.random.default_rng(14)
    with mp.workdps(50):
        for _ in range(300):
            p = random_params(rng)
            z, g, eta = mp.mpf(p.zeta), mp.mpf(p.gamma), mp.mpf(p.eta)
            d = mp.e ** (-z)
            ref = [2 * eta / g**2 * (z - 2 * (1 - d) + (1 - d**2) / 2), eta / g * (1 - d) ** 2, eta * (1 - d**2)]
            cov = noise_covariance(p)
            for got, want in zip((cov.sxx2, cov.sxv2, cov.svv2), ref):
                assert abs(got - float(want)) <= 1e-14 * float(want)


def test_covariance_matches_fine_grid_simulation():
    h, gamma, eta = 0.7, 1.3, 0.8
    n_sub, n_draws = 10_000, 10_000
    dt = h / n_sub
    rng = np.random.default_rng(13)
    x = np.zeros(n_draws)
    v = np.zeros(n_draws)
    scale = math.sqrt(2 * gamma * eta * dt)
    for _ in range(n_sub):
        x += v * dt
        v += -gamma * v * dt + scale * rng.standard_normal(n_draws)
    cov = noise_covariance(KlmcParams(h, gamma, eta))
    for sample, target in ((x * x, cov.sxx2), (x * v, cov.sxv2), (v * v, cov.svv2)):
        se = sample.std(ddof=1) / math.sqrt(n_draws)
        assert abs(sample.mean() - target) <= 3 * se


def test_degenerate_step_raises():
    with pytest.raises(DegenerateStepError):
        noise_covariance(KlmcParams(1e-120, 1.0, 1.0))


def test_kernel_coefficients_consistent():
    p = KlmcParams(0.3, 1.7, 0.4)
    k = Kernel.build(p, QuadraticPotential.isotropic(1))
    with mp.workdps(40):
        z, g, eta = mp.mpf(p.zeta), mp.mpf(p.gamma), mp.mpf(p.eta)
        d = mp.e ** (-z)
        ref = [(1 - d) / g, eta * (z + d - 1) / g**2, d, eta * (1 - d) / g]
    for got, want in zip((k.c_xv, k.c_xg, k.c_vv, k.c_vg), ref):
        assert abs(got - float(want)) <= 1e-15 * abs(float(want))


def test_free_damped_motion():
    p = KlmcParams(0.4, 1.5, 1.0)
    k = Kernel.build(p, FlatPotential(2))
    s = PhaseState([1.0, -1.0], [2.0, 0.5])
    out = step(k, s, np.zeros((2, 2)))
    np.testing.assert_allclose(out.x, s.x + (1 - p.delta) / p.gamma * s.v, rtol=1e-15)
    np.testing.assert_allclose(out.v, p.delta * s.v, rtol=1e-15)


def test_deterministic_step_matches_transition_matrix():
    p = KlmcParams(0.37, 1.9, 0.6)
    lam = 2.3
    k = Kernel.build(p, QuadraticPotential.isotropic(1, lam))
    s = PhaseState([0.8], [-1.1])
    out = step(k, s, np.zeros((2, 1)))
    ref = oracle.transition_matrix(p, lam) @ np.array([0.8, -1.1])
    np.testing.assert_allclose([out.x[0], out.v[0]], ref, rtol=1e-14)


def test_single_step_independent_coefficients():
    # gamma = 2, eta = 1/beta, lam = beta = 1, h = 0.5, state (1, 0), zero noise
    with mp.workdps(40):
        z = mp.mpf(1)
        d = mp.e ** (-z)
        x_ref = 1 - (z + d - 1) / 4
        v_ref = -(1 - d) / 2
    k = Kernel.build(KlmcParams(0.5, 2.0, 1.0), QuadraticPotential.isotropic(1, 1.0))
    out = step(k, PhaseState([1.0], [0.0]), np.zeros((2, 1)))
    assert out.x[0] == pytest.approx(float(x_ref), rel=1e-15)
    assert out.v[0] == pytest.approx(float(v_ref), rel=1e-15)


def test_step_validates_shapes():
    k = Kernel.build(KlmcParams(0.1, 1.0, 1.0), QuadraticPotential.isotropic(2))
    with pytest.raises(KlmcError):
        step(k, PhaseState.zeros(3), np.zeros((2, 3)))
    with pytest.raises(KlmcError):
        step(k, PhaseState.zeros(2), np.zeros((3, 2)))


def test_non_finite_gradient_poisons():
    k = Kernel.build(KlmcParams(0.1, 1.0, 1.0), NanPotential(2))
    with pytest.raises(PoisonedStateError):
        step(k, PhaseState.zeros(2), np.zeros((2, 2)))


def test_coupled_equal_states_stay_equal():
    k = Kernel.build(KlmcParams(0.2, 1.0, 0.5), QuadraticPotential([0.5, 2.0]))
    s = PhaseState([1.0, 2.0], [0.0, -1.0])
    a, b = coupled_step(k, s, s, np.random.default_rng(0).normal(size=(2, 2)))
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.v, b.v)


def test_coupled_difference_is_linear():
    rng = np.random.default_rng(21)
    lam = np.array([0.3, 1.0, 4.0])
    for _ in range(1000):
        p = random_params(rng)
        k = Kernel.build(p, QuadraticPotential(lam))
        s1 = PhaseState(rng.normal(size=3), rng.normal(size=3))
        s2 = PhaseState(rng.normal(size=3), rng.normal(size=3))
        a, b = coupled_step(k, s1, s2, rng.normal(size=(2, 3)))
        for i, l in enumerate(lam):
            want = oracle.transition_matrix(p, l) @ np.array([s1.x[i] - s2.x[i], s1.v[i] - s2.v[i]])
            got = np.array([a.x[i] - b.x[i], a.v[i] - b.v[i]])
            scale = np.abs(oracle.transition_matrix(p, l)).max() * (
                abs(s1.x[i]) + abs(s2.x[i]) + abs(s1.v[i]) + abs(s2.v[i])
            )
            assert np.max(np.abs(got - want)) <= 1e-13 * scale


def test_coupled_ratio_bounded_by_contraction():
    rng = np.random.default_rng(22)
    prof = ConvexityProfile(0.5, 2.0)
    gamma, eta = 2.0, 0.5
    h = 0.8 * theory.step_size_limit(gamma, eta, prof, "general")
    p = KlmcParams(h, gamma, eta)
    c = theory.contraction_exact(p, prof).c_exact
    lam = np.array([0.5, 1.1, 2.0])
    k = Kernel.build(p, QuadraticPotential(lam))
    norm = norm_for(gamma)
    for _ in range(1000):
        s1 = PhaseState(rng.normal(size=3), rng.normal(size=3))
        s2 = PhaseState(rng.normal(size=3), rng.normal(size=3))
        a, b = coupled_step(k, s1, s2, rng.normal(size=(2, 3)))
        before = norm.sq(s1.x - s2.x, s1.v - s2.v)
        after = norm.sq(a.x - b.x, a.v - b.v)
        assert after / before <= 1 - c + 1e-12


def test_difference_sequence_is_noise_independent():
    k = Kernel.build(KlmcParams(0.3, 1.0, 0.5), QuadraticPotential([0.5, 1.5]))
    i1, i2 = PhaseState([1.0, 0.0], [0.0, 1.0]), PhaseState([0.0, 0.0], [0.0, 0.0])
    d1 = coupling_decay(k, i1, i2, 50, RngStream(1))
    d2 = coupling_decay(k, i1, i2, 50, RngStream(2))
    np.testing.assert_array_equal(d1.series, d2.series)


def test_rng_stream_reproducible_and_distinct():
    a = RngStream(5, 0).generator().standard_normal(1000)
    b = RngStream(5, 0).generator().standard_normal(1000)
    c = RngStream(5, 1).generator().standard_normal(1000)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert abs(np.corrcoef(a, c)[0, 1]) < 0.15


def test_rng_stream_rejects_out_of_range():
    with pytest.raises(KlmcError):
        RngStream(-1)
    with pytest.raises(KlmcError):
        RngStream(0, 2**64)


def test_run_chain_single_step_equals_step():
    k = Kernel.build(KlmcParams(0.3, 1.2, 0.7), QuadraticPotential([1.0, 2.0]))
    init = PhaseState([0.5, -0.5], [1.0, 0.0])
    stream = RngStream(99, 3)
    res = run_chain(k, init, 1, stream, burn_in=0)
    noise = stream.generator().standard_normal((1, 2, 2))[0]
    ref = step(k, init, noise)
    np.testing.assert_array_equal(res.final.x, ref.x)
    np.testing.assert_array_equal(res.final.v, ref.v)


def test_run_chain_bit_identical_and_blocking_invariant():
    k = Kernel.build(KlmcParams(0.3, 1.2, 0.7), QuadraticPotential([1.0, 2.0]))
    init = PhaseState.zeros(2)
    a = run_chain(k, init, 5000, RngStream(4), burn_in=100, thin=7, batch_size=500)
    b = run_chain(k, init, 5000, RngStream(4), burn_in=100, thin=7, batch_size=500)
    c = run_chain(k, init, 5000, RngStream(4), burn_in=100, thin=7, batch_size=500, block=333)
    np.testing.assert_array_equal(a.trajectory, b.trajectory)
    np.testing.assert_array_equal(a.comoment, b.comoment)
    np.testing.assert_array_equal(a.trajectory, c.trajectory)
    np.testing.assert_allclose(a.comoment, c.comoment, rtol=1e-12)
    assert a.batch_second_moments.shape == (10, 2, 2, 2)


def test_run_chain_moments_match_two_pass():
    k = Kernel.build(KlmcParams(0.3, 1.2, 0.7), QuadraticPotential([1.0]))
    res = run_chain(k, PhaseState([3.0], [0.0]), 3000, RngStream(8), burn_in=0, thin=1, block=256)
    z = res.trajectory[:, 1:]
    np.testing.assert_allclose(res.mean[:, 0], z.mean(axis=0), rtol=1e-12)
    np.testing.assert_allclose(res.covariance()[:, :, 0], np.cov(z.T, ddof=0), rtol=1e-10)


def test_trajectory_rows_layout():
    k = Kernel.build(KlmcParams(0.3, 1.2, 0.7), QuadraticPotential([1.0, 2.0, 3.0]))
    res = run_chain(k, PhaseState.zeros(3), 20, RngStream(1), burn_in=0, thin=5)
    assert res.trajectory.shape == (4, 7)
    np.testing.assert_array_equal(res.trajectory[:, 0], [5, 10, 15, 20])
    np.testing.assert_array_equal(res.trajectory[-1, 1:4], res.final.x)
    np.testing.assert_array_equal(res.trajectory[-1, 4:], res.final.v)


def test_default_burn_in():
    p = KlmcParams(0.5, 2.0, 1.0)
    k = Kernel.build(p, QuadraticPotential([0.1, 1.0]))
    assert default_burn_in(k) == 10 * math.ceil(2.0 / (0.5 * 1.0 * 0.1))


def test_moment_overflow_reports_step():
    k = Kernel.build(KlmcParams(1e-3, 1.0, 1e-3), QuadraticPotential([1.0]))
    with pytest.raises(MomentOverflowError) as err:
        run_chain(k, PhaseState([1e200], [0.0]), 100, RngStream(0), burn_in=0, block=10)
    assert err.value.step == 10


def test_poisoned_chain_reports_step():
    k = Kernel.build(KlmcParams(0.1, 1.0, 1.0), NanPotential(1))
    with pytest.raises(PoisonedStateError) as err:
        run_chain(k, PhaseState.zeros(1), 10, RngStream(0), burn_in=0)
    assert err.value.step == 1


def test_run_chain_rejects_zero_steps():
    k = Kernel.build(KlmcParams(0.1, 1.0, 1.0), QuadraticPotential([1.0]))
    with pytest.raises(KlmcError):
        run_chain(k, PhaseState.zeros(1), 0, RngStream(0))


def test_run_chains_pool_matches_serial():
    k = Kernel.build(KlmcParams(0.3, 1.2, 0.7), QuadraticPotential([1.0, 2.0]))
    inits = [PhaseState.zeros(2), PhaseState([1.0, 1.0], [0.0, 0.0]), PhaseState.zeros(2)]
    serial = run_chains(k, inits, 500, seed=3, burn_in=0, thin=50)
    pooled = run_chains(k, inits, 500, seed=3, workers=2, burn_in=0, thin=50)
    for a, b in zip(serial, pooled):
        np.testing.assert_array_equal(a.trajectory, b.trajectory)
    assert not np.array_equal(serial[0].trajectory, serial[2].trajectory)


def test_coupling_decay_equal_init_is_zero():
    k = Kernel.build(KlmcParams(0.3, 1.0, 0.5), QuadraticPotential([1.0]))
    s = PhaseState([1.0], [1.0])
    dec = coupling_decay(k, s, s, 20, RngStream(0))
    assert dec.series.shape == (21,) and not dec.series.any() and not dec.truncated


def test_coupling_decay_truncates_on_underflow():
    p = KlmcParams(1.0, 2.0, 0.3)
    k = Kernel.build(p, QuadraticPotential([1.0]))
    dec = coupling_decay(k, PhaseState([1.0], [0.0]), PhaseState.zeros(1), 100_000, RngStream(0))
    assert dec.truncated
    assert dec.series[-1] >= 1e-300 and dec.series.size < 100_001
    assert dec.log_rate < 0


def test_coupling_decay_ratios_follow_exact_factor():
    p = KlmcParams(0.6, 2.0, 0.3)
    lam = 1.3
    k = Kernel.build(p, QuadraticPotential([lam]))
    dec = coupling_decay(k, PhaseState([1.0], [0.3]), PhaseState.zeros(1), 400, RngStream(0))
    rho_sq = oracle.exact_contraction_factor(p, lam)
    c = theory.c_minus(p.r_of(lam), p.zeta)
    assert dec.ratios.max() <= rho_sq * (1 + 1e-12)
    assert dec.ratios.max() <= 1 - c + 1e-12
