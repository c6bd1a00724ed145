"""Statistical checks tying ensemble simulation to the closed-form theory.

Every check owns one ensemble run, reports an estimate against a reference
with an explicit tolerance, and echoes enough configuration to reproduce
itself bit-for-bit.  Tolerances combine three Monte-Carlo standard errors
with an explicit O(dt) allowance (coefficient 5) for the weak-order-one
discretization bias of the scheme, so statistical noise never masks a
systematic formula error.  Monotonicity clauses (decreasing residuals,
Cauchy differences) additionally gate the limit checks; when such a clause
fails, ``passed`` is false even if the endpoint tolerance holds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import moments, riccati
from .model import ModelParams
from .simulate import SimConfig, simulate_ensemble
from .spectral import SpectralData, expm_integral, matrix_exponential

__all__ = [
    "CheckResult",
    "VerificationReport",
    "PreconditionError",
    "martingale_defect",
    "convergence_series",
    "direction_residual",
    "laplace_check",
    "moment_check",
    "default_limit_grid",
]

#: Scheme-bias allowance coefficient (multiplies dt), pinned by step-halving.
_BIAS_COEFF = 5.0


class PreconditionError(ValueError):
    """A check was requested outside the hypotheses under which it is valid."""


@dataclass(frozen=True)
class CheckResult:
    """One verification outcome.

    ``passed`` is equivalent to ``abs(estimate - reference) <= tolerance``
    conjoined with any monotonicity clause recorded in ``details``.
    """

    name: str
    estimate: float
    reference: float
    tolerance: float
    standard_error: float | None
    passed: bool
    details: dict

    def to_jsonable(self) -> dict:
        return {
            "name": self.name,
            "estimate": self.estimate,
            "reference": self.reference,
            "tolerance": self.tolerance,
            "standard_error": self.standard_error,
            "passed": self.passed,
            "details": self.details,
        }


@dataclass(frozen=True)
class VerificationReport:
    """Model/spectral echo plus check results; reconstructs the whole run."""

    model: dict
    spectral: dict
    checks: tuple[CheckResult, ...]
    seed: int
    config: dict

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_jsonable(self) -> dict:
        return {
            "model": self.model,
            "spectral": self.spectral,
            "seed": self.seed,
            "config": self.config,
            "all_passed": self.all_passed,
            "checks": [c.to_jsonable() for c in self.checks],
        }

    def render_text(self) -> str:
        rows = [("check", "estimate", "reference", "tolerance", "std-error", "result")]
        for c in self.checks:
            rows.append(
                (
                    c.name,
                    f"{c.estimate:.6g}",
                    f"{c.reference:.6g}",
                    f"{c.tolerance:.6g}",
                    "-" if c.standard_error is None else f"{c.standard_error:.6g}",
                    "pass" if c.passed else "FAIL",
                )
            )
        widths = [max(len(r[k]) for r in rows) for k in range(6)]
        lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows]
        lines.append(f"overall: {'pass' if self.all_passed else 'FAIL'}")
        return "\n".join(lines)


def _echo(cfg: SimConfig, t_grid: Sequence[float]) -> dict:
    return {
        "dt": cfg.dt,
        "paths": cfg.paths,
        "seed": cfg.seed,
        "workers": cfg.workers,
        "t_grid": [float(t) for t in t_grid],
    }


def _run(params, spectral, cfg: SimConfig, t_grid, **kw):
    run_cfg = replace(cfg, horizon=float(max(t_grid)), record_grid=tuple(t_grid))
    return simulate_ensemble(params, spectral, run_cfg, **kw)


def _se(values: np.ndarray) -> float:
    """Standard error of the mean of ``values`` (real samples, ddof = 1)."""
    n = values.shape[0]
    if n < 2:
        return 0.0
    return float(values.std(ddof=1) / math.sqrt(n))


def _se_complex(values: np.ndarray) -> float:
    n = values.shape[0]
    if n < 2:
        return 0.0
    var = values.real.var(ddof=1) + values.imag.var(ddof=1)
    return float(math.sqrt(var / n))


def default_limit_grid(spectral: SpectralData, points: int = 4) -> tuple[float, ...]:
    """Default grid for limit checks: t_max = 6 / s, several e-foldings deep."""
    if spectral.criticality != "supercritical":
        raise PreconditionError("limit checks require a supercritical model")
    t_max = 6.0 / spectral.s
    return tuple(t_max * (k + 1) / points for k in range(points))


def _require_supercritical(name: str, spectral: SpectralData) -> None:
    if not spectral.irreducible:
        raise PreconditionError(f"{name} requires an irreducible branching mean matrix")
    if spectral.criticality != "supercritical":
        raise PreconditionError(
            f"{name} requires a supercritical model: s = {spectral.s:.6g} is not > 0"
        )


def _pair_in_window(name: str, spectral: SpectralData, pair_index: int) -> tuple[complex, np.ndarray]:
    lam, v = spectral.eigen[pair_index]
    if pair_index > 0:
        s = spectral.s
        if not (lam.real > 0.5 * s and lam.real <= s):
            raise PreconditionError(
                f"{name}: eigenvalue {lam:.6g} of pair {pair_index} violates the hypothesis "
                f"Re(lambda) in (s/2, s] = ({0.5 * s:.6g}, {s:.6g}] under which the scaled "
                f"projection converges"
            )
    return lam, v


def martingale_defect(
    params: ModelParams, spectral: SpectralData, cfg: SimConfig, t_grid: Sequence[float]
) -> CheckResult:
    """Constancy of the mean of exp(-t B~) X_t - int_0^t exp(-u B~) beta~ du.

    The transformed process is a martingale started at x0, so the ensemble
    mean of the transform must equal x0 at every grid time.  The estimate
    is the worst Euclidean defect over the grid.
    """
    stats = _run(params, spectral, cfg, t_grid, keep_states=True)
    defects, ses, series = [], [], []
    for j, t in enumerate(stats.times):
        a = matrix_exponential(spectral.b_tilde, -t)
        shift = expm_integral(-spectral.b_tilde, spectral.beta_tilde, float(t))
        transformed = stats.states[:, j, :] @ a.T - shift
        mean = transformed.mean(axis=0)
        defect = float(np.linalg.norm(mean - params.x0))
        comp_se = [_se(transformed[:, i]) for i in range(params.d)]
        defects.append(defect)
        ses.append(max(comp_se))
        series.append({"t": float(t), "defect": defect, "component_se": comp_se})
    estimate = max(defects)
    se = max(ses)
    tolerance = 3.0 * se + _BIAS_COEFF * cfg.dt * float(np.linalg.norm(params.x0))
    return CheckResult(
        name="martingale_defect",
        estimate=estimate,
        reference=0.0,
        tolerance=tolerance,
        standard_error=se,
        passed=estimate <= tolerance,
        details={"per_time": series, "config": _echo(cfg, t_grid)},
    )


def convergence_series(
    params: ModelParams,
    spectral: SpectralData,
    cfg: SimConfig,
    pair_index: int,
    t_grid: Sequence[float],
    mode: str,
) -> CheckResult:
    """Convergence of the scaled eigenprojection exp(-lam t) <v, X_t>.

    ``mode="L1"``: the ensemble mean at t_max must hit the limit mean
    <v, x0> + <v, beta~> / lam within 3 standard errors plus the O(dt)
    bias allowance.  ``mode="L2"``: the ensemble second moment must land
    within max(3 SE, 2%) of the closed-form limit M2 and its successive
    grid differences must decrease (Cauchy behavior).

    Requires a supercritical irreducible model; a non-dominant pair must
    have Re(lambda) in (s/2, s] (for finite atomic measures the associated
    jump-tail moment conditions hold automatically).
    """
    if mode not in ("L1", "L2"):
        raise ValueError(f"mode must be 'L1' or 'L2', got {mode!r}")
    _require_supercritical("convergence_series", spectral)
    lam, v = _pair_in_window("convergence_series", spectral, pair_index)
    stats = _run(params, spectral, cfg, t_grid, projections=[v], keep_projections=True)
    scaled = stats.proj_raw[0] * np.exp(-lam * stats.times)[None, :]  # (paths, T)

    if mode == "L1":
        w_mean = complex(np.dot(v, params.x0)) + complex(np.dot(v, spectral.beta_tilde)) / lam
        m_series = scaled.mean(axis=0)
        se = _se_complex(scaled[:, -1])
        estimate = float(abs(m_series[-1] - w_mean))
        tolerance = 3.0 * se + _BIAS_COEFF * cfg.dt * abs(w_mean)
        passed = estimate <= tolerance
        details = {
            "mode": "L1",
            "pair_index": pair_index,
            "lambda": [lam.real, lam.imag],
            "limit_mean": [w_mean.real, w_mean.imag],
            "mean_series": [[z.real, z.imag] for z in m_series],
            "config": _echo(cfg, t_grid),
        }
        return CheckResult(
            name="convergence_series_l1",
            estimate=estimate,
            reference=0.0,
            tolerance=tolerance,
            standard_error=se,
            passed=passed,
            details=details,
        )

    q_series = np.mean(np.abs(scaled) ** 2, axis=0)
    m2 = moments.second_moment_limit(params, spectral, pair_index).m2
    se = _se(np.abs(scaled[:, -1]) ** 2)
    estimate = float(q_series[-1])
    tolerance = max(3.0 * se, 0.02 * m2)
    diffs = np.abs(np.diff(q_series))
    cauchy_ok = bool(np.all(np.diff(diffs) < 0)) if len(diffs) >= 2 else True
    passed = abs(estimate - m2) <= tolerance and cauchy_ok
    details = {
        "mode": "L2",
        "pair_index": pair_index,
        "lambda": [lam.real, lam.imag],
        "q_series": q_series.tolist(),
        "cauchy_differences": diffs.tolist(),
        "cauchy_decreasing": cauchy_ok,
        "config": _echo(cfg, t_grid),
    }
    return CheckResult(
        name="convergence_series_l2",
        estimate=estimate,
        reference=m2,
        tolerance=tolerance,
        standard_error=se,
        passed=passed,
        details=details,
    )


def direction_residual(
    params: ModelParams, spectral: SpectralData, cfg: SimConfig, t_grid: Sequence[float]
) -> CheckResult:
    """Collapse of exp(-s t) X_t onto the dominant growth direction.

    r(t) is the ensemble mean of || exp(-s t) (X_t - <u, X_t> u~) ||, the
    pathwise distance to the dominant ray.  Passes when r is non-increasing
    across the grid (within one standard error) and the final value is at
    most max(3 SE, 5% of the initial value).
    """
    _require_supercritical("direction_residual", spectral)
    stats = _run(params, spectral, cfg, t_grid, keep_states=True)
    u, ur = spectral.u_left, spectral.u_right
    r_vals, se_vals, series = [], [], []
    for j, t in enumerate(stats.times):
        x = stats.states[:, j, :]
        resid = x - np.outer(x @ u, ur)
        norms = np.exp(-spectral.s * float(t)) * np.linalg.norm(resid, axis=1)
        r_vals.append(float(norms.mean()))
        se_vals.append(_se(norms))
        series.append({"t": float(t), "residual_mean": r_vals[-1], "se": se_vals[-1]})
    monotone = all(
        r_vals[j + 1] <= r_vals[j] + max(se_vals[j], se_vals[j + 1])
        for j in range(len(r_vals) - 1)
    )
    estimate = r_vals[-1]
    tolerance = max(3.0 * se_vals[-1], 0.05 * r_vals[0])
    passed = monotone and estimate <= tolerance
    return CheckResult(
        name="direction_residual",
        estimate=estimate,
        reference=0.0,
        tolerance=tolerance,
        standard_error=se_vals[-1],
        passed=passed,
        details={"per_time": series, "non_increasing": monotone, "config": _echo(cfg, t_grid)},
    )


def laplace_check(
    params: ModelParams,
    spectral: SpectralData,
    cfg: SimConfig,
    x: Sequence[float] | None,
    lam_list: Sequence[Sequence[float]],
    t: float,
) -> CheckResult:
    """Empirical exp(-<lam, X_t>) versus the Riccati-flow transform.

    ``x`` overrides the model's initial state when given.  The estimate is
    the worst deviation normalized by its per-lambda tolerance
    3 SE + 5 dt, so values <= 1 pass.
    """
    run_params = params if x is None else replace(params, x0=np.asarray(x, dtype=float))
    stats = _run(run_params, spectral, cfg, [t], keep_states=True)
    states = stats.states[:, 0, :]
    rows, worst = [], 0.0
    worst_se = 0.0
    for lam in lam_list:
        lam = np.asarray(lam, dtype=float)
        emp_samples = np.exp(-(states @ lam))
        emp = float(emp_samples.mean())
        se = _se(emp_samples)
        ref = riccati.laplace_transform(run_params, run_params.x0, lam, t)
        tol = 3.0 * se + _BIAS_COEFF * cfg.dt
        ratio = abs(emp - ref) / tol
        if ratio >= worst:
            worst, worst_se = ratio, se
        rows.append(
            {"lambda": lam.tolist(), "empirical": emp, "reference": ref, "se": se, "tolerance": tol}
        )
    return CheckResult(
        name="laplace_check",
        estimate=worst,
        reference=0.0,
        tolerance=1.0,
        standard_error=worst_se,
        passed=worst <= 1.0,
        details={"t": float(t), "per_lambda": rows, "config": _echo(cfg, [t])},
    )


def moment_check(
    params: ModelParams,
    spectral: SpectralData,
    cfg: SimConfig,
    pair_index: int,
    t_grid: Sequence[float],
    reference_scale: float = 1.0,
) -> CheckResult:
    """Ensemble mean and projected second moment versus the closed forms.

    At every grid time the componentwise mean must match ``mean_vector``
    and the projected second moment must match
    ``second_moment_projection`` within 3 SE + 5 dt * reference.  The
    estimate is the worst deviation/tolerance ratio.  ``reference_scale``
    deliberately perturbs the references (a harness-honesty hook: scaling
    by 1.5 must make the check fail).
    """
    lam, v = spectral.eigen[pair_index]
    stats = _run(params, spectral, cfg, t_grid, projections=[v], keep_projections=True, keep_states=True)
    worst, worst_se = 0.0, 0.0
    series = []
    for j, t in enumerate(stats.times):
        mean_ref = moments.mean_vector(params, spectral, float(t)) * reference_scale
        x = stats.states[:, j, :]
        entry = {"t": float(t), "mean": [], "second_moment": {}}
        for i in range(params.d):
            se = _se(x[:, i])
            tol = 3.0 * se + _BIAS_COEFF * cfg.dt * abs(mean_ref[i])
            dev = abs(float(x[:, i].mean()) - mean_ref[i])
            ratio = dev / tol if tol > 0 else (0.0 if dev == 0 else math.inf)
            if ratio >= worst:
                worst, worst_se = ratio, se
            entry["mean"].append(
                {"component": i, "estimate": float(x[:, i].mean()), "reference": float(mean_ref[i]),
                 "se": se, "tolerance": tol}
            )
        sm_ref = (
            moments.second_moment_projection(params, spectral, pair_index, float(t)).total
            * reference_scale
        )
        smp = np.abs(stats.proj_raw[0][:, j]) ** 2
        se = _se(smp)
        tol = 3.0 * se + _BIAS_COEFF * cfg.dt * abs(sm_ref)
        dev = abs(float(smp.mean()) - sm_ref)
        ratio = dev / tol if tol > 0 else (0.0 if dev == 0 else math.inf)
        if ratio >= worst:
            worst, worst_se = ratio, se
        entry["second_moment"] = {
            "estimate": float(smp.mean()), "reference": float(sm_ref), "se": se, "tolerance": tol
        }
        series.append(entry)
    return CheckResult(
        name="moment_check",
        estimate=worst,
        reference=0.0,
        tolerance=1.0,
        standard_error=worst_se,
        passed=worst <= 1.0,
        details={
            "pair_index": pair_index,
            "lambda": [lam.real, lam.imag],
            "reference_scale": reference_scale,
            "per_time": series,
            "config": _echo(cfg, t_grid),
        },
    )
