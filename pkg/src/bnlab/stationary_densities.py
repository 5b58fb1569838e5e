"""Closed-form and quadrature-normalized stationary densities.

Families:

* ``tsallis_density``: the bounded-support generalization of the Gaussian,
  ``A (1 - ((1-q)/(3-q)) (z/sigma)^2)^(1/(1-q))`` for ``q < 1``; the
  power-law branch ``q >= 1`` is out of scope;
* ``tsb_overdamped_density``: position density ``(1-x^2)^(1/(1-q))`` of the
  first-order base model (confining regime), normalized on (-1, 1) -- this
  equals the bounded generalized Gaussian at ``sigma = sqrt((1-q)/(3-q))``;
* ``phase_space_density``: the Boltzmann-form joint density of the
  second-order dynamics, a product of the position density and a Gaussian
  velocity marginal with variance ``(1-q)/m``;
* ``alpha_density``: ``exp(-U_alpha(x)/(1-q))`` normalized on (-1, 1) for
  repulsion exponent ``alpha > 1``.

Normalization constants are always computed by quadrature and cached; the
closed Beta-function forms are used as oracles in the test suite, not here.
Underflow of ``alpha_density`` near the endpoints to exact 0.0 is defined
behavior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._quadrature import converged_integral
from .errors import ContractError
from .noise_models import alpha_potential

__all__ = [
    "TsallisDensity",
    "TsbOverdampedDensity",
    "AlphaFamilyDensity",
    "GaussianDensity",
    "PhaseSpaceDensity",
    "tsallis_density",
    "tsb_overdamped_density",
    "phase_space_density",
    "alpha_density",
    "l1_distance",
]

_NODES = 32
_PANELS = 16
_REL_TOL = 1e-11


@lru_cache(maxsize=128)
def _norm_power(gamma: float) -> float:
    """``int_{-1}^{1} (1-x^2)^gamma dx`` via the x = sin(theta) substitution."""
    if not gamma > -1.0:
        raise ContractError("exponent must exceed -1 for a normalizable density")

    def f(theta: np.ndarray) -> np.ndarray:
        return np.cos(theta) ** (2.0 * gamma + 1.0)

    return converged_integral(f, -math.pi / 2, math.pi / 2, _NODES, _PANELS, _REL_TOL,
                              what="power-density normalization")


@lru_cache(maxsize=128)
def _norm_alpha(alpha: float, q: float) -> float:
    beta = 1.0 - q

    def f(x: np.ndarray) -> np.ndarray:
        u = ((1.0 + x) ** (1.0 - alpha) + (1.0 - x) ** (1.0 - alpha) - 2.0) / (alpha - 1.0)
        with np.errstate(over="ignore", under="ignore"):
            return np.exp(-u / beta)

    return converged_integral(f, -1.0, 1.0, _NODES, _PANELS, _REL_TOL,
                              singular=(-1.0, 1.0), what="alpha-density normalization")


def _check_q(q: float) -> None:
    if not q < 1.0:
        raise ContractError(
            f"q={q} is outside the bounded-support regime (q < 1 required); "
            "the power-law branch is unsupported"
        )


@dataclass(frozen=True)
class TsallisDensity:
    """Bounded generalized-Gaussian density; support (-L, L) with
    ``L = sigma*sqrt((3-q)/(1-q))``."""

    q: float
    sigma: float

    def __post_init__(self):
        _check_q(self.q)
        if not self.sigma > 0.0:
            raise ContractError("sigma must be positive")

    @property
    def half_width(self) -> float:
        return self.sigma * math.sqrt((3.0 - self.q) / (1.0 - self.q))

    @property
    def support(self) -> tuple:
        return (-self.half_width, self.half_width)

    @property
    def normalization(self) -> float:
        return 1.0 / (self.half_width * _norm_power(1.0 / (1.0 - self.q)))

    def pdf(self, z):
        z = np.asarray(z, dtype=float)
        base = 1.0 - (z / self.half_width) ** 2
        gamma = 1.0 / (1.0 - self.q)
        out = np.where(base > 0.0, np.maximum(base, 0.0) ** gamma, 0.0)
        return self.normalization * out


@dataclass(frozen=True)
class TsbOverdampedDensity:
    """Stationary position density ``(1-x^2)^(1/(1-q)) / Z`` on (-1, 1)."""

    q: float

    def __post_init__(self):
        _check_q(self.q)

    @property
    def support(self) -> tuple:
        return (-1.0, 1.0)

    @property
    def normalization(self) -> float:
        return 1.0 / _norm_power(1.0 / (1.0 - self.q))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(np.abs(x) > 1.0):
            raise ContractError("density support is [-1, 1]")
        return self.normalization * np.maximum(1.0 - x * x, 0.0) ** (1.0 / (1.0 - self.q))


@dataclass(frozen=True)
class GaussianDensity:
    """Centered Gaussian; used as the velocity marginal."""

    variance: float

    def __post_init__(self):
        if not self.variance > 0.0:
            raise ContractError("variance must be positive")

    @property
    def support(self) -> tuple:
        return (-math.inf, math.inf)

    def pdf(self, v):
        v = np.asarray(v, dtype=float)
        return np.exp(-v * v / (2.0 * self.variance)) / math.sqrt(2.0 * math.pi * self.variance)


@dataclass(frozen=True)
class PhaseSpaceDensity:
    """Joint stationary density of the second-order dynamics: the product of
    the position density and a Gaussian in v with variance ``(1-q)/m``."""

    q: float
    m: float

    def __post_init__(self):
        _check_q(self.q)
        if not self.m > 0.0:
            raise ContractError("mass must be positive")

    def marginal_x(self) -> TsbOverdampedDensity:
        return TsbOverdampedDensity(self.q)

    def marginal_v(self) -> GaussianDensity:
        return GaussianDensity((1.0 - self.q) / self.m)

    @property
    def normalization(self) -> float:
        return self.marginal_x().normalization / math.sqrt(
            2.0 * math.pi * (1.0 - self.q) / self.m)

    def pdf(self, x, v):
        return self.marginal_x().pdf(x) * self.marginal_v().pdf(v)


@dataclass(frozen=True)
class AlphaFamilyDensity:
    """Stationary density ``exp(-U_alpha(x)/(1-q)) / Z`` on (-1, 1), alpha > 1.

    Decays to zero at the endpoints faster than any power; values close to
    the endpoints underflow to exact 0.0, which is intended.
    """

    alpha: float
    q: float

    def __post_init__(self):
        _check_q(self.q)
        if not self.alpha > 1.0:
            raise ContractError(
                "alpha_density requires alpha > 1; at alpha = 1 use "
                "tsb_overdamped_density, and for alpha < 1 no stationary density exists"
            )

    @property
    def support(self) -> tuple:
        return (-1.0, 1.0)

    @property
    def normalization(self) -> float:
        return 1.0 / _norm_alpha(self.alpha, self.q)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(np.abs(x) > 1.0):
            raise ContractError("density support is [-1, 1]")
        beta = 1.0 - self.q
        u = ((1.0 + x) ** (1.0 - self.alpha) + (1.0 - x) ** (1.0 - self.alpha) - 2.0) / (
            self.alpha - 1.0)
        with np.errstate(over="ignore", under="ignore"):
            body = np.exp(-u / beta)
        return self.normalization * np.where(np.abs(x) >= 1.0, 0.0, body)


def tsallis_density(z, q: float, sigma_t: float):
    """Bounded generalized-Gaussian value(s) at ``z``; zero outside the support."""
    return TsallisDensity(q, sigma_t).pdf(z)


def tsb_overdamped_density(x, q: float):
    """Stationary position density of the first-order base model at ``x``."""
    return TsbOverdampedDensity(q).pdf(x)


def phase_space_density(x, v, q: float, m: float):
    """Joint stationary density of the second-order dynamics at ``(x, v)``."""
    return PhaseSpaceDensity(q, m).pdf(x, v)


def alpha_density(x, alpha: float, q: float):
    """Stationary density of the generalized family (alpha > 1) at ``x``."""
    return AlphaFamilyDensity(alpha, q).pdf(x)


def l1_distance(histogram, density) -> float:
    """L1 distance between an empirical histogram and a density, in [0, 2].

    Compares per-bin empirical mass with the exact bin mass
    ``int_bin pdf``; 0 means perfect agreement at bin resolution, 2 means
    disjoint mass.  The histogram support must lie within the density's.
    """
    if histogram.total == 0:
        raise ContractError("histogram is empty")
    lo, hi = density.support
    if histogram.lo < lo - 1e-12 or histogram.hi > hi + 1e-12:
        raise ContractError(
            f"histogram support [{histogram.lo}, {histogram.hi}] exceeds "
            f"density support [{lo}, {hi}]"
        )
    edges = histogram.edges
    xg, wg = np.polynomial.legendre.leggauss(16)
    a = edges[:-1]
    h = 0.5 * (edges[1:] - a)
    xs = (a + h)[:, None] + h[:, None] * xg[None, :]
    bin_mass = h * (density.pdf(xs.ravel()).reshape(xs.shape) @ wg)
    emp_mass = histogram.counts / histogram.total
    return float(np.abs(emp_mass - bin_mass).sum())
