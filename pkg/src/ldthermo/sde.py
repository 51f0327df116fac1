"""
Euler-Maruyama ensembles of the small-noise Langevin equation, histogram
densities, empirical rate functions and coarse-grained velocity statistics.

Random numbers come from counter-based Philox streams. Paths are processed in
fixed blocks of ``BLOCK_PATHS``; block ``k`` draws from the stream keyed by
``SeedSequence(seed, spawn_key=(k,))``. Output therefore depends only on
``(model, x0, cfg)``, never on how blocks are scheduled.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BlowUp, EmptySupport, InsufficientSamples, InvalidParam
from .grid import DensityEstimate, Grid
from .models import ModelSpec

__all__ = [
    "EnsembleConfig",
    "TrajectorySet",
    "VelocityStats",
    "simulate_ensemble",
    "histogram_density",
    "empirical_ldrf",
    "velocity_stats",
    "BLOCK_PATHS",
]

BLOCK_PATHS = 16384


@dataclass(frozen=True)
class EnsembleConfig:
    epsilon: float
    step: float
    horizon: float
    n_paths: int = 1
    seed: int = 0
    record_stride: int = 1
    blowup_bound: float = 1e6

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise InvalidParam(f"epsilon must be >= 0, got {self.epsilon}")
        if not self.step > 0:
            raise InvalidParam(f"step must be > 0, got {self.step}")
        if not self.horizon >= self.step:
            raise InvalidParam(f"horizon {self.horizon} must be >= step {self.step}")
        if int(self.n_paths) < 1:
            raise InvalidParam("n_paths must be >= 1")
        if int(self.record_stride) < 1:
            raise InvalidParam("record_stride must be >= 1")
        if not (0 <= int(self.seed) < 2 ** 64):
            raise InvalidParam("seed must fit in 64 unsigned bits")

    @property
    def n_steps(self) -> int:
        n = int(round(self.horizon / self.step))
        if abs(n * self.step - self.horizon) > 1e-9 * max(1.0, self.horizon):
            raise InvalidParam(f"horizon {self.horizon} is not a multiple of step {self.step}")
        return n

    def as_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "step": self.step,
            "horizon": self.horizon,
            "n_paths": int(self.n_paths),
            "seed": int(self.seed),
            "record_stride": int(self.record_stride),
        }


@dataclass(frozen=True, eq=False)
class TrajectorySet:
    """Recorded ensemble: ``states`` has shape ``(n_paths, n_times, dim)``."""

    times: np.ndarray
    states: np.ndarray
    config: EnsembleConfig
    model: ModelSpec = field(repr=False)
    x0: np.ndarray = None

    @property
    def record_interval(self) -> float:
        return self.config.step * self.config.record_stride

    def final(self) -> np.ndarray:
        return self.states[:, -1, :]

    def at(self, index: int) -> np.ndarray:
        return self.states[:, index, :]


def _record_steps(n_steps, stride):
    steps = list(range(0, n_steps + 1, stride))
    if steps[-1] != n_steps:
        steps.append(n_steps)
    return np.array(steps)


def _block_rng(seed, block):
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(block),))
    return np.random.Generator(np.random.Philox(ss))


def simulate_ensemble(model: ModelSpec, x0, cfg: EnsembleConfig) -> TrajectorySet:
    """Euler-Maruyama paths of ``dx = b dt + sqrt(2 eps D) dB`` from a common start.

    Raises
    ------
    BlowUp
        A coordinate became non-finite or exceeded ``cfg.blowup_bound``.
    """
    x0 = model.points(x0).reshape(model.dim)
    n_steps = cfg.n_steps
    steps = _record_steps(n_steps, int(cfg.record_stride))
    rec_slot = -np.ones(n_steps + 1, dtype=int)
    rec_slot[steps] = np.arange(len(steps))
    n_paths = int(cfg.n_paths)
    out = np.empty((n_paths, len(steps), model.dim))
    h = cfg.step
    noise_scale = np.sqrt(2.0 * cfg.epsilon * h)

    chol_const = None
    if model.constant_diffusion:
        chol_const = np.linalg.cholesky(model.D(x0))

    for block, start in enumerate(range(0, n_paths, BLOCK_PATHS)):
        stop = min(start + BLOCK_PATHS, n_paths)
        m = stop - start
        rng = _block_rng(cfg.seed, block)
        x = np.broadcast_to(x0, (m, model.dim)).copy()
        out[start:stop, 0] = x
        for k in range(1, n_steps + 1):
            dx = model.b(x) * h
            if cfg.epsilon > 0:
                xi = rng.standard_normal((m, model.dim))
                if chol_const is not None:
                    dx += noise_scale * (xi @ chol_const.T)
                else:
                    L = np.linalg.cholesky(model.D(x))
                    dx += noise_scale * np.einsum("pij,pj->pi", L, xi)
            x = x + dx
            if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > cfg.blowup_bound:
                raise BlowUp(f"{model.name}: path left |x| <= {cfg.blowup_bound:g} at t={k * h:.6g}")
            slot = rec_slot[k]
            if slot >= 0:
                out[start:stop, slot] = x
    return TrajectorySet(steps * h, out, cfg, model, x0)


def histogram_density(samples, grid: Grid, epsilon: float, time: float = 0.0) -> DensityEstimate:
    """Fixed-grid histogram with cell-volume normalization.

    Cells are centred on the grid nodes. Samples outside the grid cells are
    dropped and counted in ``meta['n_outside']``; the result is normalized over
    the samples that landed inside.
    """
    samples = np.asarray(samples, dtype=float).reshape(-1, grid.dim)
    counts, _ = np.histogramdd(samples, bins=grid.edges())
    inside = int(counts.sum())
    if inside == 0:
        raise EmptySupport("no sample fell inside the grid")
    values = counts / (inside * grid.cell_volume)
    meta = {"n_samples": int(len(samples)), "n_outside": int(len(samples) - inside)}
    return DensityEstimate(grid, values, epsilon, time, meta)


def empirical_ldrf(density: DensityEstimate) -> np.ma.MaskedArray:
    """``-eps ln p``, shifted to minimum 0; nodes with zero density are masked."""
    p = density.values
    mask = p <= 0
    if np.all(mask):
        raise EmptySupport("density has no positive node")
    with np.errstate(divide="ignore"):
        phi = -density.epsilon * np.log(np.where(mask, 1.0, p))
    phi = np.ma.MaskedArray(phi, mask=mask)
    return phi - phi.min()


@dataclass(frozen=True)
class VelocityStats:
    n_samples: int
    mean_xdot: np.ndarray
    cov_xdot: np.ndarray
    mean_y: np.ndarray
    cov_y: np.ndarray
    se_mean_xdot: np.ndarray
    se_cov_xdot: np.ndarray
    se_mean_y: np.ndarray
    se_cov_y: np.ndarray


def _cov_se(cov, n):
    # Gaussian sampling error of a covariance entry: var(c_ij) = (c_ii c_jj + c_ij^2) / (n - 1)
    d = np.diag(cov)
    return np.sqrt((np.outer(d, d) + cov ** 2) / (n - 1))


def velocity_stats(traj: TrajectorySet, center, radius: float, delta_t: float) -> VelocityStats:
    """Moments of ``xdot = dx/dt`` over windows of length ``delta_t`` that start near ``center``.

    Windows are non-overlapping along each recorded path. The conjugate momentum
    is ``y = D^{-1}(center) (xdot - b(center)) / 2``.

    Raises
    ------
    InvalidParam
        ``delta_t`` is not a multiple of the recording interval, or the integrator
        step exceeds ``delta_t / 10``.
    InsufficientSamples
        Fewer than 100 windows start within ``radius`` of ``center``.
    """
    model = traj.model
    center = model.points(center).reshape(model.dim)
    rec = traj.record_interval
    k = int(round(delta_t / rec))
    if k < 1 or abs(k * rec - delta_t) > 1e-9 * delta_t:
        raise InvalidParam(f"delta_t={delta_t} is not a multiple of the record interval {rec}")
    if traj.config.step > delta_t / 10 * (1 + 1e-12):
        raise InvalidParam(f"integrator step {traj.config.step} must be <= delta_t/10 = {delta_t / 10}")
    starts = np.arange(0, traj.states.shape[1] - k, k)
    if len(starts) == 0:
        raise InsufficientSamples("trajectories are shorter than one delta_t window")
    x_start = traj.states[:, starts, :]
    incr = traj.states[:, starts + k, :] - x_start
    near = np.linalg.norm(x_start - center, axis=-1) <= radius
    xdot = incr[near] / delta_t
    n = len(xdot)
    if n < 100:
        raise InsufficientSamples(f"only {n} increments start within {radius} of {center}")
    b_c = model.b(center)
    Dinv = np.linalg.inv(model.D(center))
    y = 0.5 * (xdot - b_c) @ Dinv.T
    cov_x = np.atleast_2d(np.cov(xdot, rowvar=False))
    cov_y = np.atleast_2d(np.cov(y, rowvar=False))
    return VelocityStats(
        n_samples=n,
        mean_xdot=xdot.mean(axis=0),
        cov_xdot=cov_x,
        mean_y=y.mean(axis=0),
        cov_y=cov_y,
        se_mean_xdot=np.sqrt(np.diag(cov_x) / n),
        se_cov_xdot=_cov_se(cov_x, n),
        se_mean_y=np.sqrt(np.diag(cov_y) / n),
        se_cov_y=_cov_se(cov_y, n),
    )
