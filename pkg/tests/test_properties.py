import math

import numpy as np
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from klmc import oracle, theory
from klmc.integrator import Kernel, coupled_step, noise_covariance, step
from klmc.model import ConvexityProfile, KlmcParams, PhaseState, QuadraticPotential, WeightedNorm, norm_for

pos = st.floats(1e-3, 1e3, allow_nan=False, allow_infinity=False)
zetas = st.floats(1e-4, 30.0)
unit = st.floats(1e-12, 1.0)
vec = arrays(np.float64, 4, elements=st.floats(-1e3, 1e3))


@given(pos, vec)
def test_contraction_norm_positive_and_equivalent(gamma, z):
    nrm = norm_for(gamma)
    x, v = z[:2], z[2:]
    lo, hi = np.linalg.eigvalsh(nrm.gram)
    sq = nrm.sq(x, v)
    plain = float(x @ x + v @ v)
    assert lo > 0
    assert lo * plain * (1 - 1e-12) - 1e-300 <= sq <= hi * plain * (1 + 1e-12) + 1e-300
    assert math.isclose(sq, float(np.concatenate([x, v]) @ np.kron(nrm.gram, np.eye(2)) @ np.concatenate([x, v])), rel_tol=1e-9, abs_tol=1e-9 * hi * plain)


@given(pos, st.floats(0.0, 1e3))
def test_weighted_norm_factor_reproduces_gram(a, b):
    assume(4 * b * b <= a)
    nrm = WeightedNorm(a, b)
    t = nrm.factor
    assert np.allclose(t.T @ t, nrm.gram, rtol=1e-12, atol=1e-12 * a)


@given(zetas, unit)
def test_c_minus_sign_follows_r_max(zeta, frac):
    rm = theory.r_max(zeta)
    assert theory.c_minus(frac * rm * (1 - 1e-9), zeta) > 0
    assert theory.c_minus(rm * (1 + frac), zeta) <= 0


@given(zetas, unit)
def test_c_minus_stays_below_one(zeta, frac):
    assert theory.c_minus(frac * 2 * theory.r_max(zeta), zeta) < 1


@given(zetas)
def test_f_function_bounds(zeta):
    fm, fp = theory.f_mom(zeta), theory.f_pos(zeta)
    assert 0 < fm <= min(1.0, 4 / 3 * zeta**3 * (1 + 1e-12))
    assert 0 < fp <= min(zeta**2, 8 / 15 * zeta**5 * (1 + 1e-12))


@given(pos, pos, pos)
def test_noise_covariance_positive_definite(h, gamma, eta):
    assume(h * gamma < 700)
    m = noise_covariance(KlmcParams(h, gamma, eta)).matrix
    assert m[0, 0] > 0 and m[1, 1] > 0
    assert m[0, 0] * m[1, 1] - m[0, 1] ** 2 > -1e-12 * m[0, 0] * m[1, 1]


law_cov = arrays(np.float64, (2, 2), elements=st.floats(-3, 3))
law_mean = arrays(np.float64, 2, elements=st.floats(-3, 3))


def _law(a, mu):
    return oracle.GaussianLaw([1.0], [2], mu[None], (a @ a.T)[None])


@given(pos, law_cov, law_mean, law_cov, law_mean, law_cov, law_mean)
def test_gaussian_distance_is_a_metric(gamma, a1, m1, a2, m2, a3, m3):
    nrm = norm_for(gamma)
    x, y, z = _law(a1, m1), _law(a2, m2), _law(a3, m3)
    dxy = oracle.gaussian_w(nrm, x, y)
    # squared distances are trace differences, so rounding scales with the transformed traces
    t = nrm.factor
    size = sum(np.trace(t @ (a @ a.T) @ t.T) + (t @ m) @ (t @ m) for a, m in ((a1, m1), (a2, m2), (a3, m3)))
    scale = math.sqrt(1e-10 * (1 + size))
    assert dxy >= 0
    assert oracle.gaussian_w(nrm, x, x) <= scale
    assert abs(dxy - oracle.gaussian_w(nrm, y, x)) <= scale
    assert dxy <= oracle.gaussian_w(nrm, x, z) + oracle.gaussian_w(nrm, z, y) + scale


@given(st.floats(0.01, 1.0), st.floats(0.5, 5.0), vec, arrays(np.float64, (2, 2), elements=st.floats(-5, 5)))
def test_step_is_pure_and_deterministic(h, gamma, z, noise):
    kernel = Kernel.build(KlmcParams(h, gamma, 1.0), QuadraticPotential([1.0, 2.0]))
    s = PhaseState(z[:2], z[2:])
    before = (s.x.copy(), s.v.copy(), noise.copy())
    a, b = step(kernel, s, noise), step(kernel, s, noise)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.v, b.v)
    assert np.array_equal(s.x, before[0]) and np.array_equal(s.v, before[1]) and np.array_equal(noise, before[2])


@given(st.floats(0.01, 0.99), vec, vec, arrays(np.float64, (2, 2), elements=st.floats(-5, 5)))
def test_coupled_difference_contracts(frac, z1, z2, noise):
    prof = ConvexityProfile(1.0, 2.0)
    gamma = 3.0
    eta = 0.5 * gamma**2 / (10 * prof.beta)
    h = frac * theory.step_size_limit(gamma, eta, prof, "linear")
    p = KlmcParams(h, gamma, eta)
    kernel = Kernel.build(p, QuadraticPotential([1.0, 2.0]))
    s1, s2 = PhaseState(z1[:2], z1[2:]), PhaseState(z2[:2], z2[2:])
    n1, n2 = coupled_step(kernel, s1, s2, noise)
    nrm = norm_for(gamma)
    before = nrm.sq(s1.x - s2.x, s1.v - s2.v)
    after = nrm.sq(n1.x - n2.x, n1.v - n2.v)
    assume(before > 1e-6)
    assert after <= (1 - theory.contraction_linear(p, prof)) * before * (1 + 1e-9) + 1e-9
