"""Time stepping for the first-order SDE and the second-order Newtonian system.

Public single-step operations (:func:`step_overdamped`,
:func:`step_underdamped`) take an explicit Gaussian increment so their
arithmetic is directly checkable; path-level simulation
(:func:`simulate_path`) and the ensemble drivers in
:mod:`bnlab.monte_carlo` run the numba kernels with per-path
counter-based noise streams.

Boundary handling
-----------------
A proposal that lands at ``|x| >= 1 - boundary_guard`` is retried at half
the step down to ``dt_min``.  At the floor, the crossing is declared an
exit (with linearly interpolated crossing time) when the model's
boundaries are attainable; for models whose boundaries are unattainable
the crossing is a discretization artifact and the proposal is rejected and
redrawn.  Path-level simulation additionally shrinks the step near the
boundary in proportion to the squared distance (first order) or to
distance/speed and force stiffness (second order), which is what keeps the
first-exit bias small; see :mod:`bnlab._kernels`.

Trajectory dumps are CSV rows ``t,x`` (first order) or ``t,x,v,E`` (second
order), in that column order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from . import _kernels
from ._kernels import KAPPA_EXIT, KAPPA_SAFE, SCHEME_EULER, SCHEME_IMPLICIT
from ._rng import stream_key
from .diffusion_analysis import boundaries_attainable
from .errors import ContractError, NumericalError
from .noise_models import NoiseModel, total_energy

__all__ = [
    "StepConfig",
    "OverdampedState",
    "UnderdampedState",
    "ExitEvent",
    "ExitResult",
    "Trajectory",
    "EnergyTrace",
    "step_overdamped",
    "step_underdamped",
    "simulate_path",
    "energy_balance_check",
]

_SCHEMES = {"euler_maruyama": SCHEME_EULER, "semi_implicit_drift": SCHEME_IMPLICIT}

# dt_min default: dt_base / 2**27 resolves the boundary layer far below the
# bulk scale while the graded shrinking keeps the extra cost logarithmic.
_DT_MIN_SHIFT = 2.0**-27


@dataclass(frozen=True)
class StepConfig:
    """Step sizes, boundary guard, horizon, and scheme for one run."""

    dt_base: float
    horizon: float
    dt_min: Optional[float] = None
    boundary_guard: float = 1e-12
    scheme: str = "euler_maruyama"

    def __post_init__(self):
        if not self.dt_base > 0.0:
            raise ContractError("dt_base must be positive")
        if self.dt_min is not None and not 0.0 < self.dt_min <= self.dt_base:
            raise ContractError("need 0 < dt_min <= dt_base")
        if not 0.0 < self.boundary_guard < 1e-3:
            raise ContractError("boundary_guard must lie in (0, 1e-3)")
        if self.horizon < 0.0:
            raise ContractError("horizon must be >= 0")
        if self.scheme not in _SCHEMES:
            raise ContractError(f"unknown scheme {self.scheme!r}")

    @property
    def scheme_id(self) -> int:
        return _SCHEMES[self.scheme]

    def resolved_dt_min(self) -> float:
        return self.dt_min if self.dt_min is not None else self.dt_base * _DT_MIN_SHIFT


@dataclass(frozen=True)
class OverdampedState:
    x: float
    t: float = 0.0


@dataclass(frozen=True)
class UnderdampedState:
    x: float
    v: float
    t: float = 0.0


@dataclass(frozen=True)
class ExitEvent:
    """Boundary crossing emitted by a step: interpolated time and side."""

    time: float
    side: int


@dataclass(frozen=True)
class ExitResult:
    """Outcome of one simulated path."""

    exited: bool
    exit_time: Optional[float]
    exit_side: Optional[int]
    steps_taken: int
    max_abs_x: float
    energy_summary: Optional[tuple] = None  # (E0, max recorded E, last E); second order only


@dataclass(frozen=True)
class Trajectory:
    """Recorded samples of one path; ``v``/``energy`` are None for first order."""

    t: np.ndarray
    x: np.ndarray
    v: Optional[np.ndarray] = None
    energy: Optional[np.ndarray] = None


@dataclass(frozen=True)
class EnergyTrace:
    """Per-path total energies at fixed checkpoint times (NaN = path ended)."""

    checkpoints: np.ndarray
    energy0: np.ndarray          # (n_paths,)
    energies: np.ndarray         # (n_paths, n_checkpoints)


def _kappa_for(model: NoiseModel) -> float:
    return KAPPA_EXIT if boundaries_attainable(model) else KAPPA_SAFE


def step_overdamped(
    state: OverdampedState,
    dw: float,
    model,
    cfg: StepConfig,
    dt: Optional[float] = None,
    rng: Optional[np.random.Generator] = None,
) -> Union[OverdampedState, ExitEvent]:
    """One Euler-Maruyama proposal ``x' = x + phi(x) dt + sigma dw``.

    ``dw`` must carry variance ``dt`` (default ``cfg.dt_base``).  A proposal
    crossing ``1 - boundary_guard`` is retried at half the step with a fresh
    increment drawn from ``rng`` (required in that case), down to ``dt_min``;
    at the floor the crossing becomes an :class:`ExitEvent` when the
    boundaries are attainable and is redrawn otherwise.

    ``model`` needs ``drift(x)`` and ``sigma``; any object providing them is
    accepted (handy for test doubles).
    """
    if not math.isfinite(dw):
        raise ContractError(f"non-finite Gaussian increment: {dw}")
    dt = cfg.dt_base if dt is None else dt
    dt_min = min(cfg.resolved_dt_min(), dt)
    barrier = 1.0 - cfg.boundary_guard
    try:
        attainable = boundaries_attainable(model)
    except AttributeError:  # duck-typed test double without alpha/q
        attainable = True
    sigma = model.sigma
    x = state.x
    while True:
        if cfg.scheme == "semi_implicit_drift":
            x1 = _kernels._implicit_step(x, dt, sigma * dw, getattr(model, "alpha", 1.0))
        else:
            x1 = x + model.drift(x) * dt + sigma * dw
        if abs(x1) < barrier:
            return OverdampedState(x=x1, t=state.t + dt)
        if dt > dt_min * 1.0000000001 or not attainable:
            if rng is None:
                raise ContractError(
                    "boundary-crossing proposal needs retries: pass rng for fresh increments"
                )
            dt = max(dt * 0.5, dt_min)
            dw = rng.normal(0.0, math.sqrt(dt))
            continue
        side = 1 if x1 > 0.0 else -1
        edge = barrier if side == 1 else -barrier
        frac = (edge - x) / (x1 - x)
        return ExitEvent(time=state.t + frac * dt, side=side)


def step_underdamped(
    state: UnderdampedState,
    dw: float,
    m: float,
    model,
    cfg: StepConfig,
    dt: Optional[float] = None,
    rng: Optional[np.random.Generator] = None,
) -> Union[UnderdampedState, ExitEvent]:
    """One Euler-Maruyama step of the position-velocity system:
    ``x' = x + v dt``, ``v' = v + (phi(x) - v) dt/m + (sigma/m) dw``.

    Same boundary-retry protocol as :func:`step_overdamped`; a floor-level
    crossing is reported as an :class:`ExitEvent` (a boundary contact, which
    the exact second-order dynamics never makes).
    """
    if not math.isfinite(dw):
        raise ContractError(f"non-finite Gaussian increment: {dw}")
    if not m > 0.0:
        raise ContractError("mass must be positive")
    dt = cfg.dt_base if dt is None else dt
    dt_min = min(cfg.resolved_dt_min(), dt)
    barrier = 1.0 - cfg.boundary_guard
    x, v = state.x, state.v
    while True:
        x1 = x + v * dt
        if abs(x1) < barrier:
            v1 = v + (model.drift(x) - v) * dt / m + (model.sigma / m) * dw
            return UnderdampedState(x=x1, v=v1, t=state.t + dt)
        if dt > dt_min * 1.0000000001:
            if rng is None:
                raise ContractError(
                    "boundary-crossing proposal needs retries: pass rng for fresh increments"
                )
            dt = max(dt * 0.5, dt_min)
            dw = rng.normal(0.0, math.sqrt(dt))
            continue
        side = 1 if x1 > 0.0 else -1
        edge = barrier if side == 1 else -barrier
        frac = (edge - x) / (x1 - x)
        return ExitEvent(time=state.t + frac * dt, side=side)


def simulate_path(
    x0: float,
    model: NoiseModel,
    cfg: StepConfig,
    seed: int,
    path_index: int = 0,
    v0: Optional[float] = None,
    mass: float = 1.0,
    record_stride: Optional[float] = None,
    max_records: int = 1_000_000,
    zero_noise: bool = False,
):
    """Run one path to first exit or the horizon.

    Returns ``(ExitResult, Trajectory or None)``.  ``v0 is not None``
    selects the second-order dynamics with the given ``mass``.  The noise
    stream is fully determined by ``(seed, path_index)``; re-running with a
    larger horizon replays the same path prefix.  ``zero_noise`` switches
    the stochastic force off (deterministic dissipation diagnostics).
    """
    if not abs(x0) < 1.0:
        raise ContractError(f"need |x0| < 1, got x0={x0}")
    beta = 0.0 if zero_noise else model.beta
    alpha = model.alpha
    attainable = boundaries_attainable(model)
    dt_min = cfg.resolved_dt_min()
    key = stream_key(np.uint64(seed), np.uint64(path_index))
    record = record_stride is not None
    if record:
        cap = min(max_records, int(cfg.horizon / record_stride) + 3)
    else:
        cap = 0
    out_t = np.empty(cap)
    out_x = np.empty(cap)

    if v0 is None:
        status, etime, side, steps, max_abs, n_rec = _kernels.overdamped_trajectory(
            x0, alpha, beta, attainable, cfg.scheme_id,
            cfg.dt_base, dt_min, cfg.boundary_guard, _kappa_for(model), cfg.horizon,
            key, record_stride if record else math.inf, out_t, out_x,
        )
        traj = Trajectory(t=out_t[:n_rec].copy(), x=out_x[:n_rec].copy()) if record else None
        energy_summary = None
    else:
        if not mass > 0.0:
            raise ContractError("mass must be positive")
        out_v = np.empty(cap)
        out_e = np.empty(cap)
        status, etime, side, steps, max_abs, n_rec = _kernels.underdamped_trajectory(
            x0, v0, mass, alpha, beta,
            cfg.dt_base, dt_min, cfg.boundary_guard, cfg.horizon,
            key, record_stride if record else math.inf, out_t, out_x, out_v, out_e,
        )
        if record:
            traj = Trajectory(t=out_t[:n_rec].copy(), x=out_x[:n_rec].copy(),
                              v=out_v[:n_rec].copy(), energy=out_e[:n_rec].copy())
            e0 = total_energy(x0, v0, mass, alpha)
            recorded = out_e[:n_rec]
            energy_summary = (e0, float(recorded.max()) if n_rec else e0,
                              float(recorded[-1]) if n_rec else e0)
        else:
            traj = None
            energy_summary = (total_energy(x0, v0, mass, alpha), None, None)

    if status == 2:
        raise NumericalError("path produced a non-finite state; reduce dt_base")
    exited = status == 1
    result = ExitResult(
        exited=exited,
        exit_time=float(etime) if exited else None,
        exit_side=int(side) if exited else None,
        steps_taken=int(steps),
        max_abs_x=float(max_abs),
        energy_summary=energy_summary,
    )
    return result, traj


def energy_balance_check(trace: EnergyTrace, m: float, q: float) -> int:
    """Number of checkpoints where the ensemble-mean energy gain exceeds the
    dissipation bound ``E(t) - E(0) <= (beta/m) t`` by more than three
    standard errors.

    Individual paths may exceed the bound (the fluctuating part of the
    energy input has zero mean, not zero value); the inequality constrains
    the ensemble mean, so that is what is tested.  Returns 0 when the bound
    holds at every checkpoint.
    """
    beta = 1.0 - q
    violations = 0
    for j, t in enumerate(np.asarray(trace.checkpoints, dtype=float)):
        col = trace.energies[:, j]
        ok = np.isfinite(col)
        if not np.any(ok):
            continue
        slack = col[ok] - trace.energy0[ok] - (beta / m) * t
        n = int(ok.sum())
        mean = float(slack.mean())
        se = float(slack.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        if mean > 3.0 * se + 1e-12:
            violations += 1
    return violations
