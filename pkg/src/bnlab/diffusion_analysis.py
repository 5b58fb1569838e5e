"""Classical one-dimensional diffusion machinery for the bounded-noise models.

Scale function, speed density, exit probabilities, Green's function, mean
exit time, and boundary attainability, all by deterministic quadrature.

The scale function of a diffusion ``dx = phi(x) dt + sigma dW`` with
reference point 0 is ``s(x) = int_0^x exp(U(z)/beta) dz`` where ``U`` is the
potential (``U' = -phi``) and ``beta = sigma^2/2``.  For the base model this
is ``int_0^x (1-z^2)^(-1/beta) dz``; whether ``s(+-1)`` is finite decides
whether the endpoints can be reached:

* base family (``alpha = 1``): attainable iff ``q < 0`` (``beta > 1``);
* ``alpha > 1``: the scale integrand explodes faster than any power, the
  endpoints are never attainable, for every ``q < 1``;
* ``alpha < 1``: the potential is bounded, both endpoints attainable.

Attainability is always decided by these analytic rules; quadrature only
supplies values.  Improper endpoint integrals for ``beta > 1`` use the
power substitution ``z = 1 - u^p`` with ``p = beta/(beta-1)``, which makes
the integrand smooth at the endpoint; divergent cases are never integrated
numerically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from ._quadrature import converged_integral, graded_breakpoints, panel_integral
from .errors import ContractError, DomainError, NumericalError
from .noise_models import AlphaParams, NoiseModel, TsbParams

__all__ = [
    "QuadratureConfig",
    "BoundaryReport",
    "ScaleFunction",
    "boundaries_attainable",
    "scale",
    "classify_boundaries",
    "exit_probabilities",
    "speed_density",
    "greens_function",
    "mean_exit_time",
    "ode_residual",
    "c_of_q",
    "smoluchowski_margin",
]


@dataclass(frozen=True)
class QuadratureConfig:
    """Node counts and tolerances for all scale/speed/Green integrals."""

    nodes_per_panel: int = 24
    panels: int = 16
    endpoint_offset: float = 1e-9
    rel_tol: float = 1e-9

    def __post_init__(self):
        if self.nodes_per_panel < 16:
            raise ContractError("nodes_per_panel must be >= 16")
        if self.panels < 8:
            raise ContractError("panels must be >= 8")
        if not 0.0 < self.endpoint_offset <= 1e-6:
            raise ContractError("endpoint_offset must lie in (0, 1e-6]")
        if not self.rel_tol > 0.0:
            raise ContractError("rel_tol must be positive")


@dataclass(frozen=True)
class BoundaryReport:
    """Attainability of the endpoints -1 and +1 plus the regime label.

    ``s_left``/``s_right`` are the scale-function endpoint values;
    ``math.inf`` with the matching sign marks a divergent (unattainable)
    endpoint and is a sentinel, never an operand.
    """

    left_attainable: bool
    right_attainable: bool
    s_left: float
    s_right: float
    regime: str


def _model_alpha(model: NoiseModel) -> float:
    return model.alpha


def boundaries_attainable(model: NoiseModel) -> bool:
    """Analytic attainability rule; never decided numerically."""
    alpha = _model_alpha(model)
    if alpha > 1.0:
        return False
    if alpha < 1.0:
        return True
    return model.q < 0.0


def _regime_label(model: NoiseModel) -> str:
    alpha = _model_alpha(model)
    if alpha > 1.0:
        return "alpha_gt_1_bounded"
    if alpha < 1.0:
        return "alpha_lt_1_no_well"
    return "exits" if model.q < 0.0 else "bounded"


def _potential_vec(x: np.ndarray, alpha: float) -> np.ndarray:
    """Vectorized potential on (-1, 1); assumes the domain was validated."""
    if alpha == 1.0:
        return -np.log1p(-x * x)
    return ((1.0 + x) ** (1.0 - alpha) + (1.0 - x) ** (1.0 - alpha) - 2.0) / (alpha - 1.0)


class _Cumulative:
    """Cumulative Gauss-Legendre integral of a vectorized integrand over a
    fixed breakpoint grid, evaluable at arbitrary interior points."""

    def __init__(self, f: Callable[[np.ndarray], np.ndarray], pts: np.ndarray, nodes: int):
        self.f = f
        self.pts = pts
        self.nodes = nodes
        xg, wg = np.polynomial.legendre.leggauss(nodes)
        a = pts[:-1]
        h = 0.5 * (pts[1:] - a)
        xs = (a + h)[:, None] + h[:, None] * xg[None, :]
        vals = f(xs.ravel()).reshape(xs.shape)
        per_panel = h * (vals @ wg)
        self.cum = np.concatenate(([0.0], np.cumsum(per_panel)))
        self._xg = xg
        self._wg = wg

    def eval(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        idx = np.clip(np.searchsorted(self.pts, x, side="right") - 1, 0, len(self.pts) - 2)
        a = self.pts[idx]
        h = 0.5 * (x - a)
        xs = (a + h)[:, None] + h[:, None] * self._xg[None, :]
        vals = self.f(xs.ravel()).reshape(xs.shape)
        return self.cum[idx] + h * (vals @ self._wg)

    @property
    def total(self) -> float:
        return float(self.cum[-1])


class ScaleFunction:
    """Scale transform ``s`` with reference point 0 for a noise model.

    Callable on scalars or arrays in [-1, 1]; odd by construction; strictly
    increasing.  Endpoint values are cached: finite floats when the endpoint
    is attainable, ``+-math.inf`` sentinels otherwise.  Instances are
    immutable after construction and safe to share across threads.
    """

    def __init__(self, model: NoiseModel, cfg: Optional[QuadratureConfig] = None):
        self.model = model
        self.cfg = cfg or QuadratureConfig()
        self.c = 0.0
        self.alpha = _model_alpha(model)
        self.beta = model.beta
        self.attainable = boundaries_attainable(model)
        self._build()

    # -- construction -----------------------------------------------------

    def _build(self) -> None:
        cfg = self.cfg
        if self.alpha == 1.0 and self.beta > 1.0:
            # attainable base family: everything through the endpoint tail
            p = self.beta / (self.beta - 1.0)
            inv_beta = 1.0 / self.beta

            def tail_integrand(u: np.ndarray) -> np.ndarray:
                return p * (2.0 - u**p) ** (-inv_beta)

            pts = None
            panels = cfg.panels
            for attempt in range(4):
                cand = graded_breakpoints(0.0, 1.0, panels, singular=(1.0,))
                cum = _Cumulative(tail_integrand, cand, cfg.nodes_per_panel)
                if pts is not None and abs(cum.total - prev_total) <= cfg.rel_tol * abs(cum.total):
                    break
                pts, prev_total = cand, cum.total
                panels *= 2
            else:
                raise NumericalError("scale-function tail integral did not converge")
            self._tail_cum = cum
            self._tail_p = p
            self.s_right = cum.total
        elif self.alpha == 1.0 or self.alpha > 1.0:
            # unattainable: finite values strictly inside, +-inf at the ends
            self._direct = self._build_direct(upper=1.0 - 1e-13)
            self.s_right = math.inf
        else:
            # alpha < 1: bounded potential, proper integral to the endpoint
            self._direct = self._build_direct(upper=1.0)
            self.s_right = self._direct.total
        self.s_left = -self.s_right

    def _build_direct(self, upper: float) -> _Cumulative:
        cfg = self.cfg
        beta, alpha = self.beta, self.alpha

        def integrand(z: np.ndarray) -> np.ndarray:
            if alpha == 1.0:
                return (1.0 - z * z) ** (-1.0 / beta)
            with np.errstate(over="ignore"):
                return np.exp(_potential_vec(z, alpha) / beta)

        prev = None
        panels = cfg.panels
        for attempt in range(4):
            pts = graded_breakpoints(0.0, upper, panels, singular=(1.0,))
            cum = _Cumulative(integrand, pts, cfg.nodes_per_panel)
            probe = float(np.sum(cum.eval(np.array([0.35, 0.7, min(0.97, upper * 0.97)]))))
            if prev is not None and math.isfinite(probe) and abs(probe - prev) <= cfg.rel_tol * max(abs(probe), 1.0):
                return cum
            prev = probe
            panels *= 2
        if not math.isfinite(prev):
            return cum  # overflow zone is reported lazily on evaluation
        raise NumericalError("scale-function integral did not converge")

    # -- evaluation --------------------------------------------------------

    def _tail(self, y: np.ndarray) -> np.ndarray:
        """``s(1) - s(y)`` for y in [0, 1], computed without cancellation."""
        u = (1.0 - y) ** (1.0 / self._tail_p)
        return self._tail_cum.eval(u)

    def __call__(self, x):
        scalar = np.isscalar(x)
        xa = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(np.abs(xa) > 1.0):
            raise DomainError("scale function defined on [-1, 1] only")
        ax = np.abs(xa)
        if self.alpha == 1.0 and self.beta > 1.0:
            mag = self.s_right - self._tail(ax)
        else:
            mag = np.where(ax >= 1.0, math.inf, 0.0)
            inside = ax < 1.0
            if np.any(inside):
                vals = self._direct.eval(np.clip(ax[inside], 0.0, self._direct.pts[-1]))
                mag = mag.copy()
                mag[inside] = vals
            if self.alpha < 1.0:
                mag = np.where(ax >= 1.0, self.s_right, mag)
            if not np.all(np.isfinite(mag[ax < 1.0])):
                raise NumericalError(
                    "scale function overflowed at an interior point; move the "
                    "evaluation point away from the boundary"
                )
        out = np.sign(xa) * mag
        return float(out[0]) if scalar else out

    def gap_left(self, y: np.ndarray) -> np.ndarray:
        """``s(y) - s(-1)`` without cancellation (attainable models only)."""
        y = np.asarray(y, dtype=float)
        if self.alpha == 1.0 and self.beta > 1.0:
            return np.where(y <= 0.0, self._tail(-np.minimum(y, 0.0)),
                            2.0 * self.s_right - self._tail(np.maximum(y, 0.0)))
        return self(y) - self.s_left

    def gap_right(self, y: np.ndarray) -> np.ndarray:
        """``s(1) - s(y)`` without cancellation (attainable models only)."""
        y = np.asarray(y, dtype=float)
        if self.alpha == 1.0 and self.beta > 1.0:
            return np.where(y >= 0.0, self._tail(np.maximum(y, 0.0)),
                            2.0 * self.s_right - self._tail(-np.minimum(y, 0.0)))
        return self.s_right - self(y)


@lru_cache(maxsize=64)
def _scale_cached(model: NoiseModel, cfg: QuadratureConfig) -> ScaleFunction:
    return ScaleFunction(model, cfg)


def scale(x: float, model: NoiseModel, cfg: Optional[QuadratureConfig] = None) -> float:
    """Scale function value at ``x`` in [-1, 1]; ``+-inf`` at a divergent endpoint."""
    s = _scale_cached(model, cfg or QuadratureConfig())
    if abs(x) == 1.0 and not s.attainable:
        return math.copysign(math.inf, x)
    return s(x)


def classify_boundaries(model: NoiseModel, cfg: Optional[QuadratureConfig] = None) -> BoundaryReport:
    """Attainability of the two endpoints, with cached scale endpoint values."""
    att = boundaries_attainable(model)
    if att:
        s = _scale_cached(model, cfg or QuadratureConfig())
        s_right = s.s_right
    else:
        s_right = math.inf
    return BoundaryReport(
        left_attainable=att,
        right_attainable=att,
        s_left=-s_right,
        s_right=s_right,
        regime=_regime_label(model),
    )


def _endpoint_values(sfun: ScaleFunction, a: float, b: float):
    for name, v in (("a", a), ("b", b)):
        if abs(v) > 1.0:
            raise DomainError(f"interval endpoint {name}={v} outside [-1, 1]")
    if (a == -1.0 or b == 1.0) and not sfun.attainable:
        raise DomainError(
            "scale function diverges at the requested endpoint; the boundary is "
            "not attainable for this model (see classify_boundaries)"
        )
    s_a = sfun.s_left if a == -1.0 else float(sfun(a))
    s_b = sfun.s_right if b == 1.0 else float(sfun(b))
    return s_a, s_b


def exit_probabilities(
    x0: float,
    a: float,
    b: float,
    model: NoiseModel,
    cfg: Optional[QuadratureConfig] = None,
    reference: float = 0.0,
):
    """Probabilities of leaving (a, b) through a and through b, started at x0.

    ``reference`` re-anchors the scale function; the probabilities are
    invariant under this choice (affine reparameterization) and the
    parameter exists to let callers exercise that invariance.
    """
    if not a < b:
        raise ContractError(f"need a < b, got a={a}, b={b}")
    if not a <= x0 <= b:
        raise ContractError(f"need a <= x0 <= b, got x0={x0}")
    sfun = _scale_cached(model, cfg or QuadratureConfig())
    s_a, s_b = _endpoint_values(sfun, a, b)
    s_x = float(sfun(x0))
    if reference != 0.0:
        s_ref = float(sfun(reference))
        s_a, s_b, s_x = s_a - s_ref, s_b - s_ref, s_x - s_ref
    p_left = (s_b - s_x) / (s_b - s_a)
    p_right = (s_x - s_a) / (s_b - s_a)
    return min(max(p_left, 0.0), 1.0), min(max(p_right, 0.0), 1.0)


def speed_density(y, model: NoiseModel, cfg: Optional[QuadratureConfig] = None):
    """Density ``2/(s'(y) sigma^2) = exp(-U(y)/beta)/beta`` of the speed measure.

    Closed form; ``cfg`` is accepted for interface uniformity and unused.
    """
    scalar = np.isscalar(y)
    ya = np.atleast_1d(np.asarray(y, dtype=float))
    if np.any(np.abs(ya) > 1.0):
        raise DomainError("speed density defined on [-1, 1] only")
    beta = model.beta
    alpha = _model_alpha(model)
    if alpha == 1.0:
        out = (1.0 - ya * ya) ** (1.0 / beta) / beta
    else:
        out = np.exp(-_potential_vec(ya, alpha) / beta) / beta
    return float(out[0]) if scalar else out


def greens_function(
    x: float,
    y: float,
    a: float,
    b: float,
    model: NoiseModel,
    cfg: Optional[QuadratureConfig] = None,
) -> float:
    """Expected-occupation kernel of the interval (a, b) before first exit."""
    if not (a <= x <= b and a <= y <= b):
        raise ContractError("need a <= x, y <= b")
    sfun = _scale_cached(model, cfg or QuadratureConfig())
    s_a, s_b = _endpoint_values(sfun, a, b)
    lo, hi = (x, y) if x <= y else (y, x)
    if a == -1.0 and sfun.attainable:
        left = float(sfun.gap_left(np.asarray([lo]))[0])
    else:
        left = float(sfun(lo)) - s_a
    if b == 1.0 and sfun.attainable:
        right = float(sfun.gap_right(np.asarray([hi]))[0])
    else:
        right = s_b - float(sfun(hi))
    return max(left, 0.0) * max(right, 0.0) / (s_b - s_a)


def mean_exit_time(
    x0: float,
    a: float,
    b: float,
    model: NoiseModel,
    cfg: Optional[QuadratureConfig] = None,
) -> float:
    """Mean first-exit time from (a, b) started at x0, by quadrature.

    Integrates the occupation kernel against the speed measure:
    ``M(x0) = int_a^b G_{a,b}(x0, y) m(dy)``.  Requires finite scale values
    at both endpoints (full-interval calls are valid only when the
    boundaries are attainable).
    """
    cfg = cfg or QuadratureConfig()
    if not a < b:
        raise ContractError(f"need a < b, got a={a}, b={b}")
    if not a <= x0 <= b:
        raise ContractError(f"need a <= x0 <= b, got x0={x0}")
    if x0 == a or x0 == b:
        return 0.0
    sfun = _scale_cached(model, cfg)
    s_a, s_b = _endpoint_values(sfun, a, b)
    s_x = float(sfun(x0))
    beta = model.beta
    alpha = _model_alpha(model)

    def speed(y: np.ndarray) -> np.ndarray:
        if alpha == 1.0:
            return (1.0 - y * y) ** (1.0 / beta) / beta
        return np.exp(-_potential_vec(y, alpha) / beta) / beta

    if a == -1.0 and sfun.attainable:
        gap_a = sfun.gap_left
    else:
        gap_a = lambda y: sfun(y) - s_a
    if b == 1.0 and sfun.attainable:
        gap_b = sfun.gap_right
    else:
        gap_b = lambda y: s_b - sfun(y)

    i_left = converged_integral(
        lambda y: gap_a(y) * speed(y), a, x0,
        cfg.nodes_per_panel, cfg.panels, cfg.rel_tol, singular=(-1.0, 1.0),
        what="mean-exit-time inner integral (left)",
    )
    i_right = converged_integral(
        lambda y: gap_b(y) * speed(y), x0, b,
        cfg.nodes_per_panel, cfg.panels, cfg.rel_tol, singular=(-1.0, 1.0),
        what="mean-exit-time inner integral (right)",
    )
    return ((s_b - s_x) * i_left + (s_x - s_a) * i_right) / (s_b - s_a)


def ode_residual(
    M: Callable[[float], float],
    model: NoiseModel,
    grid: Sequence[float],
    h: float = 1e-4,
) -> float:
    """Max over the grid of ``|phi M' + (sigma^2/2) M'' + 1|`` by central differences.

    The mean exit time solves ``phi M' + (sigma^2/2) M'' = -1``, so this is a
    direct consistency check of a computed M against its defining equation.
    """
    grid = np.asarray(grid, dtype=float)
    if np.any(np.abs(grid) + h >= 1.0):
        raise ContractError("grid (including the stencil +-h) must stay inside (-1, 1)")
    alpha = _model_alpha(model)
    half_sig2 = model.beta
    worst = 0.0
    for x in grid:
        m_minus, m_0, m_plus = M(x - h), M(x), M(x + h)
        d1 = (m_plus - m_minus) / (2.0 * h)
        d2 = (m_plus - 2.0 * m_0 + m_minus) / (h * h)
        if alpha == 1.0:
            phi = -2.0 * x / (1.0 - x * x)
        else:
            phi = (1.0 + x) ** (-alpha) - (1.0 - x) ** (-alpha)
        worst = max(worst, abs(phi * d1 + half_sig2 * d2 + 1.0))
    return worst


def c_of_q(q: float, cfg: Optional[QuadratureConfig] = None) -> float:
    """``-q * M(0)`` for the full-interval mean exit time of the base model, q < 0.

    Lies in [1/4, 1] for every q < 0, which pins the asymptotics of the mean
    exit time in both the q -> 0- and q -> -inf limits.
    """
    if not q < 0.0:
        raise ContractError(f"c_of_q is defined for q < 0 only, got q={q}")
    return -q * mean_exit_time(0.0, -1.0, 1.0, TsbParams(q), cfg)


def smoluchowski_margin(x: float, model: NoiseModel) -> float:
    """Validity margin ``sqrt(2(1-q)) * |1/x + 2x/(1-x^2)|`` of the overdamped
    reduction for the base model; the reduction is trustworthy where this is
    much smaller than 1.  Diverges both at the endpoints and at x = 0 (the
    x = 0 singularity is reported as ``inf``, not an error).
    """
    if _model_alpha(model) != 1.0:
        raise ContractError("the overdamped-validity margin is defined for the base family only")
    if not abs(x) < 1.0:
        raise DomainError(f"position must satisfy |x| < 1, got x={x}")
    if x == 0.0:
        return math.inf
    return math.sqrt(2.0 * (1.0 - model.q)) * abs(1.0 / x + 2.0 * x / (1.0 - x * x))
