"""Reproducible ensemble simulation of the jump-diffusion dynamics.

Scheme
------
One explicit step of size ``dt`` from the pre-step state ``X``:

1. jump counts: for every branching atom ``(rate, z)`` of type ``l`` draw
   ``Poisson(X_l * rate * dt)``, and for every immigration atom draw
   ``Poisson(rate * dt)`` (independent per-atom counts realize exactly the
   same compound-Poisson law as drawing a total count per measure and then
   picking atoms proportionally to their rates);
2. drift: ``X += (beta + B~ X - sum_l X_l m_l) dt`` where ``m_l`` is the
   first moment of the type-``l`` branching measure (the branching-jump
   compensator folded into the drift, so the ensemble mean tracks the
   closed-form mean exactly up to O(dt));
3. diffusion: ``X_l += sqrt(2 c_l max(0, X_l) dt) Z_l`` with independent
   standard normals;
4. add the drawn jump vectors;
5. clamp each component at zero.

Only the drift/diffusion terms carry discretization bias (weak order one);
compound-Poisson jumps are exact in law.

Reproducibility
---------------
Path ``p`` owns the counter-based bit stream ``Philox(key = seed << 64 | p)``
and consumes it in a fixed layout: first the full normal block of shape
``(n_steps, d)``, then (when any atoms exist) the uniform block of shape
``(n_steps, n_atoms)``.  Poisson counts are obtained from the uniforms by
exact inverse-CDF inversion.  A trajectory is therefore a pure function of
``(seed, path_index)``, and ensembles aggregate paths in index order, so
results are byte-identical for any worker count.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import ModelParams, first_moment_vector
from .spectral import SpectralData

__all__ = [
    "SimConfig",
    "Trajectory",
    "EnsembleStats",
    "SimulationError",
    "path_key",
    "simulate_path",
    "simulate_ensemble",
    "trajectory_csv",
    "ensemble_csv",
]

#: Approximate per-chunk budget for pre-drawn noise, in bytes.
_CHUNK_NOISE_BYTES = 256 * 2 ** 20
#: A Poisson count beyond this within one step means the state exploded.
_MAX_JUMPS_PER_STEP = 10_000


class SimulationError(RuntimeError):
    """Simulation failure; carries the step index where it occurred."""

    def __init__(self, step_index: int, message: str):
        super().__init__(f"step {step_index}: {message}")
        self.step_index = step_index


@dataclass(frozen=True)
class SimConfig:
    """Ensemble configuration.

    ``record_grid`` times are snapped to the nearest step multiple of
    ``dt`` and must resolve to distinct steps.  ``workers`` is advisory:
    it never changes the output, only how chunks are scheduled.
    """

    dt: float
    horizon: float
    paths: int
    seed: int
    record_grid: tuple[float, ...] | None = None
    workers: int = 1

    def __post_init__(self) -> None:
        if not (self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.horizon < 0:
            raise ValueError(f"horizon must be non-negative, got {self.horizon}")
        if self.paths < 1:
            raise ValueError(f"paths must be >= 1, got {self.paths}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")
        if self.record_grid is not None:
            object.__setattr__(self, "record_grid", tuple(float(t) for t in self.record_grid))


@dataclass(frozen=True)
class Trajectory:
    """One recorded path; ``path_seed`` is the derived Philox key."""

    times: np.ndarray
    states: np.ndarray  # shape (len(times), d), entrywise >= 0
    path_seed: int


@dataclass(frozen=True)
class EnsembleStats:
    """Per-record-time ensemble aggregates, byte-reproducible.

    ``proj_second_moment[k, j]`` is the ensemble mean of
    ``|<v_k, X_{t_j}>|^2`` for the requested projection vectors ``v_k``.
    Raw per-path projections and raw states are retained on request.
    """

    times: np.ndarray
    count: int
    mean: np.ndarray  # (T, d)
    proj_vectors: np.ndarray  # (P, d) complex
    proj_second_moment: np.ndarray  # (P, T)
    proj_raw: np.ndarray | None  # (P, paths, T) complex
    states: np.ndarray | None  # (paths, T, d)


def path_key(seed: int, path_index: int) -> int:
    """128-bit Philox key of a path: master seed in the high word, index low."""
    return (int(seed) << 64) | int(path_index)


def _grid(cfg: SimConfig) -> tuple[int, np.ndarray, np.ndarray]:
    """Number of steps, snapped record times and their step indices."""
    if cfg.horizon == 0.0:
        n_steps = 0
    else:
        n_steps = max(1, int(round(cfg.horizon / cfg.dt)))
    record = cfg.record_grid if cfg.record_grid is not None else (cfg.horizon,)
    if any(t < 0 or t > cfg.horizon + 0.5 * cfg.dt for t in record):
        raise ValueError("record times must lie within [0, horizon]")
    if list(record) != sorted(record):
        raise ValueError("record_grid must be sorted ascending")
    idx = np.array([min(n_steps, int(round(t / cfg.dt))) for t in record], dtype=int)
    if len(set(idx.tolist())) != len(idx):
        raise ValueError("record times collide after snapping to the step grid; reduce dt")
    times = idx * cfg.dt if n_steps else np.zeros(len(idx))
    return n_steps, times, idx


class _JumpTables:
    """Flattened atom tables shared by every path."""

    def __init__(self, params: ModelParams):
        d = params.d
        br_rates, br_types, rows = [], [], []
        for l, m in enumerate(params.mu):
            for rate, z in m.atoms:
                br_rates.append(rate)
                br_types.append(l)
                rows.append(z)
        for rate, z in params.nu.atoms:
            rows.append(z)
        self.n_branch = len(br_rates)
        self.br_rates = np.array(br_rates) if br_rates else np.zeros(0)
        self.br_types = np.array(br_types, dtype=int)
        self.nu_rates = params.nu.rates
        self.jumps = np.array(rows) if rows else np.zeros((0, d))
        self.n_atoms = self.jumps.shape[0]
        # compensated drift: beta + (B~ - sum_l m_l e_l^T) X
        comp = np.zeros((d, d))
        for l, m in enumerate(params.mu):
            comp[:, l] = first_moment_vector(m)
        self.comp = comp


def _poisson_from_uniform(u: np.ndarray, lam: np.ndarray, step_index: int) -> np.ndarray:
    """Exact inverse-CDF Poisson counts: smallest k with u < P(K <= k)."""
    k = np.zeros(lam.shape, dtype=np.int64)
    pmf = np.exp(-lam)
    cdf = pmf.copy()
    active = u >= cdf
    while active.any():
        if k.max() >= _MAX_JUMPS_PER_STEP:
            raise SimulationError(step_index, "jump intensity too large; state likely exploded")
        k = k + active
        pmf = np.where(active, pmf * lam / np.maximum(k, 1), pmf)
        cdf = cdf + np.where(active, pmf, 0.0)
        active = active & (u >= cdf)
        if active.any() and not np.any(pmf[active] > 0):
            break  # CDF saturated at float resolution; counts are at the representable tail
    return k


def _chunk_states(
    params: ModelParams,
    b_tilde: np.ndarray,
    cfg: SimConfig,
    lo: int,
    hi: int,
    n_steps: int,
    record_idx: np.ndarray,
) -> np.ndarray:
    """Recorded states for paths lo..hi-1, shape (hi - lo, T, d)."""
    d = params.d
    m = hi - lo
    tables = _JumpTables(params)
    a = tables.n_atoms
    normals = np.empty((m, n_steps, d))
    uniforms = np.empty((m, n_steps, a)) if a else None
    for i in range(m):
        gen = np.random.Generator(np.random.Philox(key=path_key(cfg.seed, lo + i)))
        normals[i] = gen.standard_normal((n_steps, d))
        if a:
            uniforms[i] = gen.random((n_steps, a))

    drift_t = (b_tilde - tables.comp).T
    beta = params.beta
    two_c_dt = 2.0 * params.c * cfg.dt
    br_cols = tables.br_types
    br_rate_dt = tables.br_rates * cfg.dt
    nu_lam = np.broadcast_to(tables.nu_rates * cfg.dt, (m, len(tables.nu_rates)))

    out = np.empty((m, len(record_idx), d))
    slot = {int(s): j for j, s in enumerate(record_idx)}
    x = np.broadcast_to(params.x0, (m, d)).copy()
    if 0 in slot:
        out[:, slot[0], :] = x
    with np.errstate(over="ignore", invalid="ignore"):  # explosion is detected explicitly
        for k in range(n_steps):
            if a:
                lam = np.empty((m, a))
                if tables.n_branch:
                    lam[:, : tables.n_branch] = x[:, br_cols] * br_rate_dt
                lam[:, tables.n_branch:] = nu_lam
                counts = _poisson_from_uniform(uniforms[:, k, :], lam, k)
                jump = counts @ tables.jumps
            else:
                jump = 0.0
            x = x + (beta + x @ drift_t) * cfg.dt
            x = x + np.sqrt(two_c_dt * np.maximum(x, 0.0)) * normals[:, k, :]
            x = x + jump
            np.maximum(x, 0.0, out=x)
            if not np.all(np.isfinite(x)):
                raise SimulationError(k, "state became non-finite")
            if (k + 1) in slot:
                out[:, slot[k + 1], :] = x
    return out


def _chunk_worker(args) -> np.ndarray:
    return _chunk_states(*args)


def _chunk_size(params: ModelParams, n_steps: int) -> int:
    tables = _JumpTables(params)
    per_path = max(1, n_steps) * (params.d + tables.n_atoms) * 8
    return max(1, _CHUNK_NOISE_BYTES // max(per_path, 1))


def simulate_path(
    params: ModelParams, spectral: SpectralData, cfg: SimConfig, path_index: int
) -> Trajectory:
    """Simulate one path; deterministic given (cfg.seed, path_index)."""
    if path_index < 0:
        raise ValueError("path_index must be non-negative")
    n_steps, times, record_idx = _grid(cfg)
    if n_steps == 0:
        return Trajectory(
            times=times, states=np.broadcast_to(params.x0, (len(times), params.d)).copy(),
            path_seed=path_key(cfg.seed, path_index),
        )
    states = _chunk_states(params, spectral.b_tilde, cfg, path_index, path_index + 1, n_steps, record_idx)
    return Trajectory(times=times, states=states[0], path_seed=path_key(cfg.seed, path_index))


def simulate_ensemble(
    params: ModelParams,
    spectral: SpectralData,
    cfg: SimConfig,
    projections: Sequence[Sequence[complex]] | None = None,
    keep_projections: bool = False,
    keep_states: bool = False,
) -> EnsembleStats:
    """Simulate paths 0..paths-1 and aggregate in path order.

    The aggregate is a pure function of (params, dt, horizon, paths, seed,
    record_grid); ``workers`` only parallelizes chunk execution.
    """
    n_steps, times, record_idx = _grid(cfg)
    n_rec = len(record_idx)
    if n_steps == 0:
        states = np.broadcast_to(params.x0, (cfg.paths, n_rec, params.d)).copy()
    else:
        chunk = _chunk_size(params, n_steps)
        bounds = [(lo, min(lo + chunk, cfg.paths)) for lo in range(0, cfg.paths, chunk)]
        jobs = [
            (params, spectral.b_tilde, cfg, lo, hi, n_steps, record_idx) for lo, hi in bounds
        ]
        if cfg.workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=min(cfg.workers, len(jobs))) as pool:
                parts = list(pool.map(_chunk_worker, jobs))
        else:
            parts = [_chunk_worker(j) for j in jobs]
        states = np.concatenate(parts, axis=0)

    mean = states.mean(axis=0)
    if projections is None:
        proj_vectors = np.zeros((0, params.d), dtype=complex)
    else:
        proj_vectors = np.array([np.asarray(v, dtype=complex) for v in projections])
    n_proj = proj_vectors.shape[0]
    proj_second = np.empty((n_proj, n_rec))
    raw = np.empty((n_proj, cfg.paths, n_rec), dtype=complex) if (keep_projections and n_proj) else None
    for k in range(n_proj):
        zeta = states @ proj_vectors[k]  # (paths, T) complex
        proj_second[k] = np.mean(np.abs(zeta) ** 2, axis=0)
        if raw is not None:
            raw[k] = zeta
    return EnsembleStats(
        times=times,
        count=cfg.paths,
        mean=mean,
        proj_vectors=proj_vectors,
        proj_second_moment=proj_second,
        proj_raw=raw,
        states=states if keep_states else None,
    )


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def trajectory_csv(traj: Trajectory) -> str:
    """CSV rendering with header ``t,x1,...,xd`` and 17-significant-digit floats."""
    d = traj.states.shape[1]
    lines = ["t," + ",".join(f"x{i + 1}" for i in range(d))]
    for t, row in zip(traj.times, traj.states):
        lines.append(",".join([_fmt(t)] + [_fmt(v) for v in row]))
    return "\n".join(lines) + "\n"


def ensemble_csv(stats: EnsembleStats) -> str:
    """CSV rendering: ``t,mean_1..mean_d`` plus one second-moment column per projection."""
    d = stats.mean.shape[1]
    header = ["t"] + [f"mean_{i + 1}" for i in range(d)]
    header += [f"proj_{k}_second_moment" for k in range(stats.proj_vectors.shape[0])]
    lines = [",".join(header)]
    for j, t in enumerate(stats.times):
        row = [_fmt(t)] + [_fmt(v) for v in stats.mean[j]]
        row += [_fmt(stats.proj_second_moment[k, j]) for k in range(stats.proj_vectors.shape[0])]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"
