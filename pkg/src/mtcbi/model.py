"""Parameter sets for multi-type branching models with immigration.

A model is a tuple ``(d, c, beta, B, nu, mu, x0)``: ``d`` population types,
per-type diffusion coefficients ``c``, immigration drift ``beta``, an
essentially non-negative interaction matrix ``B`` (non-negative off-diagonal
entries), an immigration jump measure ``nu``, one branching jump measure per
type, and a deterministic initial state ``x0``.

Jump measures are restricted to finite lists of weighted atoms on the
positive orthant minus the origin.  This keeps every moment functional an
exact finite sum and makes jump simulation exact compound-Poisson sampling;
measures with densities or infinite activity are deliberately unsupported.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterator, Sequence

import numpy as np

__all__ = [
    "JumpMeasure",
    "ModelParams",
    "ValidationReport",
    "SchemaError",
    "load_model",
    "validate_admissible",
    "measure_functional",
    "first_moment_vector",
    "truncated_positive",
    "projected_second_moment",
    "norm_power_tail",
    "xlogx_tail",
]


class SchemaError(ValueError):
    """Model file does not match the expected JSON schema."""


@dataclass(frozen=True)
class JumpMeasure:
    """Finite atomic measure on U_d = R_+^d \\ {0}.

    Each atom is a pair (rate, jump): ``rate`` is an arrival intensity per
    unit time and ``jump`` a non-negative, nonzero d-vector.  Stored as
    parallel arrays; treat instances as immutable.
    """

    d: int
    rates: np.ndarray  # shape (n,)
    jumps: np.ndarray  # shape (n, d)

    @classmethod
    def from_atoms(cls, d: int, atoms: Sequence[tuple[float, Sequence[float]]]) -> "JumpMeasure":
        n = len(atoms)
        rates = np.array([a[0] for a in atoms], dtype=float)
        jumps = np.array([a[1] for a in atoms], dtype=float).reshape(n, d)
        return cls(d=int(d), rates=rates, jumps=jumps)

    @classmethod
    def empty(cls, d: int) -> "JumpMeasure":
        return cls(d=int(d), rates=np.zeros(0), jumps=np.zeros((0, int(d))))

    @property
    def atoms(self) -> Iterator[tuple[float, np.ndarray]]:
        return iter(zip(self.rates.tolist(), self.jumps))

    @property
    def total_rate(self) -> float:
        return float(self.rates.sum())

    def __len__(self) -> int:
        return int(self.rates.shape[0])


@dataclass(frozen=True)
class ModelParams:
    """Admissible parameter tuple plus the deterministic initial state.

    The single source of truth for every formula in the package.  Instances
    are immutable and safe to share across threads/processes.
    """

    d: int
    c: np.ndarray
    beta: np.ndarray
    B: np.ndarray
    nu: JumpMeasure
    mu: tuple[JumpMeasure, ...]
    x0: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float))
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float))
        object.__setattr__(self, "B", np.asarray(self.B, dtype=float))
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float))
        object.__setattr__(self, "mu", tuple(self.mu))

    def to_dict(self) -> dict:
        """Plain-JSON echo of the model (inverse of ``load_model``)."""
        return {
            "d": self.d,
            "c": self.c.tolist(),
            "beta": self.beta.tolist(),
            "B": self.B.tolist(),
            "nu": [{"rate": r, "r": z.tolist()} for r, z in self.nu.atoms],
            "mu": [[{"rate": r, "z": z.tolist()} for r, z in m.atoms] for m in self.mu],
            "x0": self.x0.tolist(),
        }


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of admissibility validation; never raised, always returned."""

    ok: bool
    violations: tuple[tuple[str, str, Any], ...] = field(default_factory=tuple)

    def render(self) -> str:
        if self.ok:
            return "model admissible: all checks passed"
        lines = ["model NOT admissible:"]
        lines += [f"  {path}: {rule} (got {value!r})" for path, rule, value in self.violations]
        return "\n".join(lines)


_TOP_KEYS = {"d", "c", "beta", "B", "nu", "mu", "x0"}


def _as_float_list(obj: Any, name: str, length: int | None = None) -> list[float]:
    if not isinstance(obj, list) or any(isinstance(v, (list, dict, str, bool)) for v in obj):
        raise SchemaError(f"'{name}' must be a flat array of numbers")
    if length is not None and len(obj) != length:
        raise SchemaError(f"'{name}' must have length {length}, got {len(obj)}")
    return [float(v) for v in obj]


def _parse_atoms(obj: Any, name: str, d: int, vec_key: str) -> JumpMeasure:
    if not isinstance(obj, list):
        raise SchemaError(f"'{name}' must be an array of atoms")
    atoms = []
    for k, atom in enumerate(obj):
        if not isinstance(atom, dict):
            raise SchemaError(f"'{name}[{k}]' must be an object")
        if set(atom.keys()) != {"rate", vec_key}:
            raise SchemaError(f"'{name}[{k}]' must have exactly keys 'rate' and '{vec_key}'")
        rate = atom["rate"]
        if isinstance(rate, (bool, str, list, dict)):
            raise SchemaError(f"'{name}[{k}].rate' must be a number")
        vec = _as_float_list(atom[vec_key], f"{name}[{k}].{vec_key}", d)
        atoms.append((float(rate), vec))
    return JumpMeasure.from_atoms(d, atoms)


def load_model(path: str) -> ModelParams:
    """Load a model file (JSON, UTF-8).

    Schema: object with exactly the keys ``d`` (int), ``c``/``beta``/``x0``
    (length-d arrays), ``B`` (d rows of d numbers), ``nu`` (array of
    ``{"rate": float, "r": [d floats]}``), ``mu`` (d arrays of
    ``{"rate": float, "z": [d floats]}``).  Unknown keys are schema errors.
    Loading does not validate admissibility; call ``validate_admissible``.
    """
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict):
        raise SchemaError("model file must contain a JSON object")
    unknown = set(obj.keys()) - _TOP_KEYS
    if unknown:
        raise SchemaError(f"unknown keys {sorted(unknown)}")
    missing = _TOP_KEYS - set(obj.keys())
    if missing:
        raise SchemaError(f"missing keys {sorted(missing)}")
    d = obj["d"]
    if not isinstance(d, int) or isinstance(d, bool) or d < 1:
        raise SchemaError("'d' must be a positive integer")
    c = _as_float_list(obj["c"], "c", d)
    beta = _as_float_list(obj["beta"], "beta", d)
    if not isinstance(obj["B"], list) or len(obj["B"]) != d:
        raise SchemaError(f"'B' must be an array of {d} rows")
    B = [_as_float_list(row, f"B[{i}]", d) for i, row in enumerate(obj["B"])]
    nu = _parse_atoms(obj["nu"], "nu", d, "r")
    if not isinstance(obj["mu"], list) or len(obj["mu"]) != d:
        raise SchemaError(f"'mu' must be an array of {d} measures")
    mu = tuple(_parse_atoms(m, f"mu[{i}]", d, "z") for i, m in enumerate(obj["mu"]))
    x0 = _as_float_list(obj["x0"], "x0", d)
    return ModelParams(d=d, c=np.array(c), beta=np.array(beta), B=np.array(B), nu=nu, mu=mu, x0=np.array(x0))


def _check_measure(name: str, m: JumpMeasure, d: int, out: list) -> None:
    if m.d != d:
        out.append((name, f"measure dimension must be {d}", m.d))
        return
    if m.jumps.shape != (len(m), d):
        out.append((name, f"jump array must have shape ({len(m)}, {d})", m.jumps.shape))
        return
    for k, (rate, z) in enumerate(m.atoms):
        if not math.isfinite(rate) or rate <= 0:
            out.append((f"{name}[{k}].rate", "rate must be finite and > 0", rate))
        if not np.all(np.isfinite(z)):
            out.append((f"{name}[{k}]", "jump vector must be finite", z.tolist()))
        elif np.any(z < 0):
            out.append((f"{name}[{k}]", "jump vector must be non-negative", z.tolist()))
        elif not np.any(z > 0):
            out.append((f"{name}[{k}]", "jump vector must be nonzero", z.tolist()))


def validate_admissible(params: ModelParams) -> ValidationReport:
    """Check every admissibility rule; report violations instead of raising.

    Pure function: identical input yields an identical report.
    """
    out: list[tuple[str, str, Any]] = []
    d = params.d
    if not isinstance(d, int) or d < 1:
        return ValidationReport(ok=False, violations=((("d", "d must be a positive integer", d),)))
    for name, vec, nonneg in (("c", params.c, True), ("beta", params.beta, True), ("x0", params.x0, True)):
        if vec.shape != (d,):
            out.append((name, f"must have shape ({d},)", vec.shape))
            continue
        if not np.all(np.isfinite(vec)):
            out.append((name, "entries must be finite", vec.tolist()))
        elif nonneg and np.any(vec < 0):
            out.append((name, "entries must be non-negative", vec.tolist()))
    if params.B.shape != (d, d):
        out.append(("B", f"must have shape ({d}, {d})", params.B.shape))
    elif not np.all(np.isfinite(params.B)):
        out.append(("B", "entries must be finite", params.B.tolist()))
    else:
        off = ~np.eye(d, dtype=bool)
        if np.any(params.B[off] < 0):
            bad = np.argwhere((params.B < 0) & off)
            for i, j in bad:
                out.append((f"B[{i}][{j}]", "B off-diagonal negative", float(params.B[i, j])))
    _check_measure("nu", params.nu, d, out)
    if len(params.mu) != d:
        out.append(("mu", f"must contain {d} branching measures", len(params.mu)))
    else:
        for i, m in enumerate(params.mu):
            _check_measure(f"mu[{i}]", m, d, out)
    return ValidationReport(ok=not out, violations=tuple(out))


# ---------------------------------------------------------------------------
# Moment functionals of jump measures (exact finite sums over atoms).
# ---------------------------------------------------------------------------

def first_moment_vector(measure: JumpMeasure) -> np.ndarray:
    """Sum of rate * jump over atoms; zero vector for the empty measure."""
    if len(measure) == 0:
        return np.zeros(measure.d)
    return measure.rates @ measure.jumps


def truncated_positive(measure: JumpMeasure, i: int, j: int) -> float:
    """Sum of rate * max(0, z_i - delta_ij) over atoms (0-based indices)."""
    if len(measure) == 0:
        return 0.0
    delta = 1.0 if i == j else 0.0
    return float(measure.rates @ np.maximum(0.0, measure.jumps[:, i] - delta))


def projected_second_moment(measure: JumpMeasure, v: Sequence[complex]) -> float:
    """Sum of rate * |<v, z>|^2 over atoms; ``v`` may be complex."""
    if len(measure) == 0:
        return 0.0
    proj = measure.jumps @ np.asarray(v, dtype=complex)
    return float(measure.rates @ np.abs(proj) ** 2)


def norm_power_tail(measure: JumpMeasure, p: float) -> float:
    """Sum of rate * ||z||^p over atoms with ||z|| >= 1 (Euclidean norm)."""
    if p < 1:
        raise ValueError(f"tail exponent must satisfy p >= 1, got {p}")
    if len(measure) == 0:
        return 0.0
    norms = np.linalg.norm(measure.jumps, axis=1)
    mask = norms >= 1.0
    return float(measure.rates[mask] @ norms[mask] ** p)


def xlogx_tail(measure: JumpMeasure) -> float:
    """Sum of rate * ||z|| log ||z|| over atoms with ||z|| >= 1."""
    if len(measure) == 0:
        return 0.0
    norms = np.linalg.norm(measure.jumps, axis=1)
    mask = norms >= 1.0
    return float(measure.rates[mask] @ (norms[mask] * np.log(norms[mask])))


def measure_functional(
    measure: JumpMeasure,
    functional: str,
    *,
    i: int | None = None,
    j: int | None = None,
    v: Sequence[complex] | None = None,
    p: float | None = None,
):
    """Dispatch a named moment functional over the measure's atoms.

    ``functional`` is one of ``first_moment_vector``,
    ``truncated_positive`` (needs i, j), ``projected_second_moment``
    (needs v), ``norm_power_tail`` (needs p >= 1), ``xlogx_tail``.
    """
    if functional == "first_moment_vector":
        return first_moment_vector(measure)
    if functional == "truncated_positive":
        if i is None or j is None:
            raise ValueError("truncated_positive requires indices i and j")
        return truncated_positive(measure, i, j)
    if functional == "projected_second_moment":
        if v is None:
            raise ValueError("projected_second_moment requires a vector v")
        return projected_second_moment(measure, v)
    if functional == "norm_power_tail":
        if p is None:
            raise ValueError("norm_power_tail requires an exponent p")
        return norm_power_tail(measure, p)
    if functional == "xlogx_tail":
        return xlogx_tail(measure)
    raise ValueError(f"unknown functional {functional!r}")
