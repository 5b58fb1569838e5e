"""Ensemble orchestration: exit-time statistics, stationary histograms,
parameter sweeps, with reproducible counter-based seeding.

Paths are embarrassingly parallel; path ``i`` of a run draws from the
stream keyed by ``(master_seed, i)``, and aggregation reduces per-path
results in path-index order, so results are independent of scheduling and
identical between serial and threaded execution.  Raising the horizon of a
run extends each path rather than re-randomizing it, so the set of exited
paths can only grow.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from ._rng import stream_key  # noqa: F401  (re-exported for tests)
from .diffusion_analysis import QuadratureConfig, boundaries_attainable, mean_exit_time
from .errors import ContractError, NumericalError
from .noise_models import NoiseModel, TsbParams
from .sde_integrators import EnergyTrace, StepConfig

__all__ = [
    "EnsembleSpec",
    "ExitStats",
    "Histogram",
    "PhaseSpaceHistogram",
    "SweepRow",
    "run_exit_ensemble",
    "run_stationary_ensemble",
    "sweep_c_of_q",
]

DEFAULT_BINS = 200
# Burn-in heuristic: ~50 relaxation times of the base model near the center.
DEFAULT_BURN_IN = 25.0


@dataclass(frozen=True)
class EnsembleSpec:
    """Everything one reproducible ensemble run needs."""

    model: NoiseModel
    n_paths: int
    steps: StepConfig
    master_seed: int
    dynamics: str = "overdamped"
    mass: float = 1.0
    x0: float = 0.0
    v0: float = 0.0

    def __post_init__(self):
        if self.n_paths < 1:
            raise ContractError("n_paths must be >= 1")
        if self.dynamics not in ("overdamped", "underdamped"):
            raise ContractError(f"unknown dynamics {self.dynamics!r}")
        if self.dynamics == "underdamped" and not self.mass > 0.0:
            raise ContractError("mass must be positive")
        if not abs(self.x0) < 1.0:
            raise ContractError("need |x0| < 1")
        if not 0 <= self.master_seed < 2**64:
            raise ContractError("master_seed must fit in 64 bits")


@dataclass(frozen=True)
class ExitStats:
    """Exit-time summary of one ensemble (censored paths excluded from the mean)."""

    n_exited: int
    n_censored: int
    mean_exit_time: Optional[float]
    std_error: Optional[float]
    side_counts: tuple
    energy: Optional[EnergyTrace] = None

    @property
    def n_paths(self) -> int:
        return self.n_exited + self.n_censored


@dataclass(frozen=True)
class Histogram:
    """Uniform-bin empirical density over (lo, hi)."""

    lo: float
    hi: float
    counts: np.ndarray

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ContractError("histogram support must have hi > lo")
        object.__setattr__(self, "counts", np.asarray(self.counts, dtype=np.int64))

    @property
    def bins(self) -> int:
        return len(self.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.bins + 1)

    @property
    def bin_width(self) -> float:
        return (self.hi - self.lo) / self.bins

    @property
    def density(self) -> np.ndarray:
        """Normalized density values; integrates to 1 over the support."""
        if self.total == 0:
            return np.zeros(self.bins)
        return self.counts / (self.total * self.bin_width)


@dataclass(frozen=True)
class PhaseSpaceHistogram:
    """Joint (x, v) histogram plus per-path velocity moments."""

    x_lo: float
    x_hi: float
    v_lo: float
    v_hi: float
    counts: np.ndarray                     # (x_bins, v_bins)
    v_moment1: np.ndarray = field(repr=False, default=None)  # per-path mean v
    v_moment2: np.ndarray = field(repr=False, default=None)  # per-path mean v^2
    samples_per_path: int = 0

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def marginal_x(self) -> Histogram:
        return Histogram(self.x_lo, self.x_hi, self.counts.sum(axis=1))

    def marginal_v(self) -> Histogram:
        return Histogram(self.v_lo, self.v_hi, self.counts.sum(axis=0))

    def v_variance(self) -> float:
        m1 = float(self.v_moment1.mean())
        return float(self.v_moment2.mean()) - m1 * m1

    def v_variance_se(self) -> float:
        """Standard error of the variance estimate from per-path spread."""
        per_path = self.v_moment2 - self.v_moment1**2
        n = len(per_path)
        return float(per_path.std(ddof=1) / math.sqrt(n))


def _resolve_kernel_params(spec: EnsembleSpec):
    model = spec.model
    attainable = boundaries_attainable(model)
    kappa = _kernels.KAPPA_EXIT if attainable else _kernels.KAPPA_SAFE
    return model.alpha, model.beta, attainable, kappa


def run_exit_ensemble(
    spec: EnsembleSpec,
    energy_checkpoints: Optional[Sequence[float]] = None,
) -> ExitStats:
    """Simulate ``spec.n_paths`` first-exit paths and aggregate.

    For the second-order dynamics "exit" means boundary contact (none are
    expected); pass ``energy_checkpoints`` to collect per-path total
    energies for the dissipation diagnostic.
    """
    alpha, beta, attainable, kappa = _resolve_kernel_params(spec)
    cfg = spec.steps
    n = spec.n_paths
    status = np.zeros(n, dtype=np.int8)
    exit_time = np.zeros(n)
    side = np.zeros(n, dtype=np.int8)
    steps = np.zeros(n, dtype=np.uint64)
    max_abs = np.zeros(n)
    energy = None

    if spec.dynamics == "overdamped":
        _kernels.overdamped_exit_ensemble(
            n, spec.x0, alpha, beta, attainable, cfg.scheme_id,
            cfg.dt_base, cfg.resolved_dt_min(), cfg.boundary_guard, kappa,
            cfg.horizon, np.uint64(spec.master_seed),
            status, exit_time, side, steps, max_abs)
    else:
        cps = np.asarray(energy_checkpoints if energy_checkpoints is not None else [],
                         dtype=float)
        if np.any(np.diff(cps) <= 0.0):
            raise ContractError("energy checkpoints must be strictly increasing")
        energy0 = np.zeros(n)
        energies = np.zeros((n, len(cps)))
        _kernels.underdamped_exit_ensemble(
            n, spec.x0, spec.v0, spec.mass, alpha, beta,
            cfg.dt_base, cfg.resolved_dt_min(), cfg.boundary_guard,
            cfg.horizon, np.uint64(spec.master_seed),
            cps, status, exit_time, side, steps, max_abs, energy0, energies)
        energy = EnergyTrace(checkpoints=cps, energy0=energy0, energies=energies)

    if np.any(status == 2):
        bad = int(np.argmax(status == 2))
        raise NumericalError(f"path {bad} produced a non-finite state; reduce dt_base")

    exited = status == 1
    n_exited = int(exited.sum())
    n_censored = n - n_exited
    if n_exited == 0 and spec.dynamics == "overdamped" and attainable and cfg.horizon > 0:
        warnings.warn(
            "all paths censored although the boundaries are attainable: "
            "horizon is probably too small for this model",
            RuntimeWarning,
            stacklevel=2,
        )
    if n_exited > 0:
        times = exit_time[exited]
        mean = float(times.mean())
        se = float(times.std(ddof=1) / math.sqrt(n_exited)) if n_exited > 1 else None
    else:
        mean = None
        se = None
    lefts = int(np.sum(side[exited] == -1))
    rights = int(np.sum(side[exited] == 1))
    return ExitStats(
        n_exited=n_exited,
        n_censored=n_censored,
        mean_exit_time=mean,
        std_error=se,
        side_counts=(lefts, rights),
        energy=energy,
    )


def run_stationary_ensemble(
    spec: EnsembleSpec,
    burn_in: float = DEFAULT_BURN_IN,
    sample_stride: float = 0.5,
    n_samples_per_path: int = 1000,
    bins: int = DEFAULT_BINS,
    v_max: Optional[float] = None,
):
    """Sample the long-time law: a position :class:`Histogram` for the
    first-order dynamics, a :class:`PhaseSpaceHistogram` for the second.

    ``burn_in`` is discarded, then one sample is recorded every
    ``sample_stride`` time units.  First-order sampling refuses models whose
    boundaries are attainable: such a process leaves (-1, 1) in finite time
    with probability one, so no stationary density on the interval exists.
    """
    if burn_in < 0 or sample_stride <= 0:
        raise ContractError("need burn_in >= 0 and sample_stride > 0")
    if n_samples_per_path < 0:
        raise ContractError("n_samples_per_path must be >= 0")
    alpha, beta, attainable, kappa = _resolve_kernel_params(spec)
    cfg = spec.steps
    n = spec.n_paths

    if spec.dynamics == "overdamped":
        if attainable:
            raise ContractError(
                "no stationary density on (-1, 1) for this model: the first-order "
                "process reaches the boundary in finite time with probability one "
                f"(regime of {spec.model}); use the second-order dynamics or a "
                "confining parameter range"
            )
        if n_samples_per_path == 0:
            return Histogram(-1.0, 1.0, np.zeros(bins, dtype=np.int64))
        out = np.empty((n, n_samples_per_path))
        n_rec = np.zeros(n, dtype=np.int64)
        _kernels.overdamped_stationary_ensemble(
            n, spec.x0, alpha, beta, cfg.scheme_id,
            cfg.dt_base, cfg.resolved_dt_min(), cfg.boundary_guard, kappa,
            burn_in, sample_stride, np.uint64(spec.master_seed), out, n_rec)
        if np.any(n_rec < n_samples_per_path):
            raise NumericalError("a path failed before recording all samples")
        counts, _ = np.histogram(out.ravel(), bins=bins, range=(-1.0, 1.0))
        return Histogram(-1.0, 1.0, counts)

    if v_max is None:
        v_max = 6.0 * math.sqrt(beta / spec.mass) if beta > 0 else 1.0
    if n_samples_per_path == 0:
        return PhaseSpaceHistogram(-1.0, 1.0, -v_max, v_max,
                                   np.zeros((bins, bins), dtype=np.int64),
                                   np.zeros(n), np.zeros(n), 0)
    out_x = np.empty((n, n_samples_per_path))
    out_v = np.empty((n, n_samples_per_path))
    n_rec = np.zeros(n, dtype=np.int64)
    _kernels.underdamped_stationary_ensemble(
        n, spec.x0, spec.v0, spec.mass, alpha, beta,
        cfg.dt_base, cfg.resolved_dt_min(), cfg.boundary_guard,
        burn_in, sample_stride, np.uint64(spec.master_seed), out_x, out_v, n_rec)
    if np.any(n_rec < n_samples_per_path):
        raise NumericalError("a path failed before recording all samples")
    counts, _, _ = np.histogram2d(
        out_x.ravel(), out_v.ravel(), bins=bins,
        range=[[-1.0, 1.0], [-v_max, v_max]])
    return PhaseSpaceHistogram(
        -1.0, 1.0, -v_max, v_max, counts.astype(np.int64),
        v_moment1=out_v.mean(axis=1),
        v_moment2=(out_v**2).mean(axis=1),
        samples_per_path=n_samples_per_path,
    )


@dataclass(frozen=True)
class SweepRow:
    q: float
    mc_mean: Optional[float]
    mc_std_error: Optional[float]
    quad_value: float
    c_value: float


def sweep_c_of_q(
    q_values: Sequence[float],
    template: EnsembleSpec,
    quad_cfg: Optional[QuadratureConfig] = None,
) -> list:
    """Full-interval mean exit time versus q < 0, Monte Carlo against quadrature.

    Each row carries the MC estimate, its standard error, the quadrature
    value, and ``C(q) = -q * E[T]`` (which lies in [1/4, 1] for every q < 0).
    """
    rows = []
    for q in q_values:
        if not q < 0.0:
            raise ContractError(f"sweep is defined for q < 0 only, got q={q}")
        model = TsbParams(q)
        spec = EnsembleSpec(
            model=model,
            n_paths=template.n_paths,
            steps=template.steps,
            master_seed=template.master_seed,
            dynamics="overdamped",
            x0=template.x0,
        )
        stats = run_exit_ensemble(spec)
        quad = mean_exit_time(template.x0, -1.0, 1.0, model, quad_cfg)
        rows.append(SweepRow(
            q=q,
            mc_mean=stats.mean_exit_time,
            mc_std_error=stats.std_error,
            quad_value=quad,
            c_value=-q * quad,
        ))
    return rows
