"""Drift forces, potentials, and energies for the bounded-noise models.

Two model families live on the open interval (-1, 1):

* the base process with drift ``-2x/(1-x^2)`` and constant noise amplitude
  ``sqrt(2*(1-q))``, parameterized by ``q < 1``;
* a one-parameter generalization with repulsion exponent ``alpha > 0``,
  drift ``1/(1+x)^alpha - 1/(1-x)^alpha``, which reduces to the base model
  at ``alpha = 1``.

Everything here is a pure function of its arguments; no state, no I/O.
The viscous rate of the second-order dynamics is normalized to 1 and is
deliberately not exposed as a parameter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

from .errors import ContractError, DomainError

__all__ = [
    "TsbParams",
    "AlphaParams",
    "MassParams",
    "NoiseModel",
    "tsb_drift",
    "alpha_drift",
    "alpha_potential",
    "total_energy",
]


@dataclass(frozen=True)
class TsbParams:
    """Parameters of the base bounded-noise process (``q < 1``).

    ``beta = 1 - q`` and ``sigma = sqrt(2*beta)`` are derived, never stored.
    """

    q: float

    def __post_init__(self):
        if not self.q < 1.0:
            raise ContractError(f"q must be < 1, got q={self.q}")

    @property
    def beta(self) -> float:
        return 1.0 - self.q

    @property
    def sigma(self) -> float:
        return math.sqrt(2.0 * self.beta)

    @property
    def alpha(self) -> float:
        """Repulsion exponent; the base model is the alpha = 1 member."""
        return 1.0

    def drift(self, x: float) -> float:
        return tsb_drift(x)

    def potential(self, x: float) -> float:
        return alpha_potential(x, 1.0)


@dataclass(frozen=True)
class AlphaParams:
    """Parameters of the generalized family: repulsion exponent ``alpha > 0``, ``q < 1``."""

    alpha: float
    q: float

    def __post_init__(self):
        if not self.alpha > 0.0:
            raise ContractError(f"alpha must be > 0, got alpha={self.alpha}")
        if not self.q < 1.0:
            raise ContractError(f"q must be < 1, got q={self.q}")

    @property
    def beta(self) -> float:
        return 1.0 - self.q

    @property
    def sigma(self) -> float:
        return math.sqrt(2.0 * self.beta)

    def drift(self, x: float) -> float:
        return alpha_drift(x, self.alpha)

    def potential(self, x: float) -> float:
        return alpha_potential(x, self.alpha)


NoiseModel = Union[TsbParams, AlphaParams]


@dataclass(frozen=True)
class MassParams:
    """Mass of the particle in the second-order dynamics; viscous rate fixed to 1."""

    m: float
    gamma: float = 1.0

    def __post_init__(self):
        if not self.m > 0.0:
            raise ContractError(f"mass must be > 0, got m={self.m}")
        if self.gamma != 1.0:
            raise ContractError("the viscous rate is normalized to gamma = 1")


def _check_interior(x: float) -> None:
    if not abs(x) < 1.0:
        raise DomainError(f"position must satisfy |x| < 1, got x={x}")


def tsb_drift(x: float) -> float:
    """Drift ``-2x/(1-x^2)`` of the base model; odd, singular at x = +-1."""
    _check_interior(x)
    return -2.0 * x / (1.0 - x * x)


def alpha_drift(x: float, alpha: float) -> float:
    """Drift of the generalized family, ``1/(1+x)^alpha - 1/(1-x)^alpha``.

    The two terms are the repulsive forces centered at -1 and +1.  At
    ``alpha = 1`` this evaluates through :func:`tsb_drift` so the reduction
    is bit-exact.
    """
    if not alpha > 0.0:
        raise ContractError(f"alpha must be > 0, got alpha={alpha}")
    if alpha == 1.0:
        return tsb_drift(x)
    _check_interior(x)
    return (1.0 + x) ** (-alpha) - (1.0 - x) ** (-alpha)


def alpha_potential(x: float, alpha: float) -> float:
    """Confining potential of the family, normalized so the value at 0 is 0.

    For ``alpha != 1`` this is ``((1+x)^(1-alpha) + (1-x)^(1-alpha) - 2)/(alpha-1)``;
    for ``alpha = 1`` it is ``-log(1-x^2)``.  For ``alpha >= 1`` the potential
    diverges at the endpoints and evaluation there raises
    :class:`~bnlab.errors.DomainError`.  For ``alpha < 1`` the endpoint values
    are finite (no potential well) and are returned.
    """
    if not alpha > 0.0:
        raise ContractError(f"alpha must be > 0, got alpha={alpha}")
    if abs(x) > 1.0 or (abs(x) == 1.0 and alpha >= 1.0):
        raise DomainError(
            f"potential undefined at x={x} for alpha={alpha} (|x| < 1 required)"
        )
    if alpha == 1.0:
        return -math.log1p(-x * x)
    return ((1.0 + x) ** (1.0 - alpha) + (1.0 - x) ** (1.0 - alpha) - 2.0) / (alpha - 1.0)


def total_energy(x: float, v: float, m: float, alpha: float = 1.0) -> float:
    """Total energy ``U(x) + m*v^2/2`` of the second-order dynamics."""
    if not m > 0.0:
        raise ContractError(f"mass must be > 0, got m={m}")
    return alpha_potential(x, alpha) + 0.5 * m * v * v
