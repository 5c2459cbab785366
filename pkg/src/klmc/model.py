"""Parameters, the weighted phase-space norm and the bundled potentials."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from ._numerics import one_minus_exp
from .errors import KlmcError


def _positive_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0.0:
        raise KlmcError(f"{name} must be finite and > 0, got {value!r}")
    return value


@dataclass(frozen=True)
class KlmcParams:
    """Step size ``h``, friction ``gamma`` and inverse mass ``eta`` of the kernel."""

    h: float
    gamma: float
    eta: float

    def __post_init__(self):
        for name in ("h", "gamma", "eta"):
            object.__setattr__(self, name, _positive_finite(name, getattr(self, name)))
        if self.zeta == 0.0 or not math.isfinite(self.zeta):
            raise KlmcError(f"h*gamma must be finite and > 0, got {self.zeta!r}")

    @classmethod
    def from_zeta(cls, zeta: float, gamma: float, eta: float) -> "KlmcParams":
        return cls(h=zeta / gamma, gamma=gamma, eta=eta)

    @property
    def zeta(self) -> float:
        return self.h * self.gamma

    @property
    def delta(self) -> float:
        return math.exp(-self.zeta)

    @property
    def one_minus_delta(self) -> float:
        return one_minus_exp(self.zeta)

    @property
    def one_minus_delta_sq(self) -> float:
        return one_minus_exp(2.0 * self.zeta)

    def r_of(self, lam):
        """Scaled eigenvalue ``eta * lam / gamma**2``."""
        return self.eta * lam / self.gamma**2


class Derived(NamedTuple):
    zeta: float
    delta: float
    r_of: Callable[[float], float]


def derive(params: KlmcParams) -> Derived:
    return Derived(params.zeta, params.delta, params.r_of)


@dataclass(frozen=True)
class ConvexityProfile:
    """Hessian bounds ``alpha * I <= hess U <= beta * I``."""

    alpha: float
    beta: float

    def __post_init__(self):
        a = _positive_finite("alpha", self.alpha)
        b = _positive_finite("beta", self.beta)
        if b < a:
            raise KlmcError(f"beta ({b}) must be >= alpha ({a})")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)

    @property
    def kappa(self) -> float:
        return self.beta / self.alpha


@dataclass(frozen=True)
class WeightedNorm:
    """Quadratic form ``|x|^2 + 2b<x, v> + a|v|^2`` on phase space."""

    a: float
    b: float

    def __post_init__(self):
        a = _positive_finite("a", self.a)
        b = float(self.b)
        if not math.isfinite(b) or b < 0.0:
            raise KlmcError(f"b must be finite and >= 0, got {b!r}")
        # a few ulps of slack so that norm_for(gamma) always validates
        if 4.0 * b * b > a * (1.0 + 4e-16):
            raise KlmcError(f"need 4 b^2 <= a, got a={a}, b={b}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def gram(self) -> np.ndarray:
        return np.array([[1.0, self.b], [self.b, self.a]])

    @property
    def factor(self) -> np.ndarray:
        """Upper-triangular ``T`` with ``T.T @ T == gram``."""
        return np.array([[1.0, self.b], [0.0, math.sqrt(self.a - self.b * self.b)]])

    def sq(self, x, v) -> float:
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        if x.shape != v.shape:
            raise KlmcError(f"dimension mismatch: x{x.shape} vs v{v.shape}")
        return float(x @ x + 2.0 * self.b * (x @ v) + self.a * (v @ v))


def norm_for(gamma: float) -> WeightedNorm:
    """The contraction norm ``a = 4/gamma^2``, ``b = 1/gamma``."""
    gamma = _positive_finite("gamma", gamma)
    return WeightedNorm(a=4.0 / gamma**2, b=1.0 / gamma)


@dataclass(frozen=True, eq=False)
class PhaseState:
    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=np.float64).reshape(-1)
        v = np.array(self.v, dtype=np.float64).reshape(-1)
        if x.shape != v.shape or x.size == 0:
            raise KlmcError(f"x and v must share a dimension >= 1, got {x.shape} and {v.shape}")
        if not (np.isfinite(x).all() and np.isfinite(v).all()):
            raise KlmcError("phase state has non-finite entries")
        x.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)

    @property
    def dim(self) -> int:
        return self.x.size

    @classmethod
    def zeros(cls, d: int) -> "PhaseState":
        return cls(np.zeros(d), np.zeros(d))


def weighted_norm_sq(norm: WeightedNorm, z: PhaseState) -> float:
    return norm.sq(z.x, z.v)


# --------------------------------------------------------------------------
# potentials


@dataclass(frozen=True, eq=False)
class Potential:
    """Base class: subclasses provide ``grad`` and a ``profile``.

    ``grad_delta(x, dx)`` returns ``grad(x) - grad(x - dx)``; subclasses
    override it with a form that stays accurate when ``dx`` is tiny compared
    to ``x`` (needed to follow coupled chains far below rounding level).
    """

    @property
    def dim(self) -> int:
        raise NotImplementedError

    @property
    def profile(self) -> ConvexityProfile:
        raise NotImplementedError

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def grad(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad_delta(self, x: np.ndarray, dx: np.ndarray) -> np.ndarray:
        return self.grad(x) - self.grad(x - dx)


def _spectrum(spectrum) -> np.ndarray:
    lam = np.array(spectrum, dtype=np.float64).reshape(-1)
    if lam.size == 0 or not np.isfinite(lam).all() or (lam <= 0).any():
        raise KlmcError("spectrum must be a non-empty array of finite positive values")
    lam.flags.writeable = False
    return lam


@dataclass(frozen=True, eq=False)
class QuadraticPotential(Potential):
    """``U(x) = sum_i lam_i x_i^2 / 2``."""

    spectrum: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "spectrum", _spectrum(self.spectrum))

    @classmethod
    def isotropic(cls, d: int, lam: float = 1.0) -> "QuadraticPotential":
        if int(d) < 1:
            raise KlmcError(f"dimension must be >= 1, got {d}")
        return cls(np.full(int(d), float(lam)))

    @property
    def dim(self) -> int:
        return self.spectrum.size

    @property
    def profile(self) -> ConvexityProfile:
        return ConvexityProfile(float(self.spectrum.min()), float(self.spectrum.max()))

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * float(np.sum(self.spectrum * x * x))

    def grad(self, x):
        return self.spectrum * x

    def grad_delta(self, x, dx):
        return self.spectrum * dx


@dataclass(frozen=True, eq=False)
class LogCoshPotential(Potential):
    """``U(x) = sum_i lam_i x_i^2 / 2 + s * sum_i log cosh(x_i)``.

    The Hessian is ``diag(lam_i + s sech^2 x_i)``, so the profile is
    ``(min lam, max lam + s)``.
    """

    spectrum: np.ndarray = field(repr=False)
    s: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "spectrum", _spectrum(self.spectrum))
        s = float(self.s)
        if not math.isfinite(s) or s < 0.0:
            raise KlmcError(f"perturbation strength must be >= 0, got {s}")
        object.__setattr__(self, "s", s)

    @property
    def dim(self) -> int:
        return self.spectrum.size

    @property
    def profile(self) -> ConvexityProfile:
        return ConvexityProfile(float(self.spectrum.min()), float(self.spectrum.max()) + self.s)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        ax = np.abs(x)
        logcosh = ax + np.log1p(np.exp(-2.0 * ax)) - math.log(2.0)
        return float(np.sum(0.5 * self.spectrum * x * x + self.s * logcosh))

    def grad(self, x):
        return self.spectrum * x + self.s * np.tanh(x)

    def grad_delta(self, x, dx):
        # tanh x - tanh y = tanh(x - y) (1 - tanh x tanh y)
        return self.spectrum * dx + self.s * np.tanh(dx) * (1.0 - np.tanh(x) * np.tanh(x - dx))
