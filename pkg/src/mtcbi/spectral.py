"""Mean-growth structure of a model: branching mean matrix and its spectrum.

The first moment of the process evolves by the matrix exponential of the
branching mean matrix ``B~`` (the interaction matrix plus the first-moment
corrections of the branching jumps), driven by the immigration mean vector
``beta~``.  For irreducible ``B~`` the dominant eigenvalue is simple and
real; its sign classifies the model and its left/right eigenvectors carry
the growth direction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.csgraph

from .model import ModelParams, first_moment_vector, truncated_positive

__all__ = [
    "SpectralData",
    "NotIrreducibleError",
    "DefectiveSpectrumError",
    "build_mean_params",
    "matrix_exponential",
    "expm_integral",
    "is_irreducible",
    "left_eigenpairs",
    "perron_and_classify",
]

#: Residual tolerance for accepting an eigenpair, relative to ||B~||_F.
_EIG_RESIDUAL_RTOL = 1e-8
#: Below this relative size, quantities are treated as numerically zero
#: (eigenvalue separation, criticality classification).
_ZERO_RTOL = 1e-10


class NotIrreducibleError(ValueError):
    """The branching mean matrix is reducible; growth theory needs irreducibility."""


class DefectiveSpectrumError(ValueError):
    """The branching mean matrix is not diagonalizable within tolerance."""


@dataclass(frozen=True)
class SpectralData:
    """Branching mean matrix, Perron triple and full left eigen-structure.

    ``eigen`` lists the left eigenpairs sorted by descending real part
    (dominant pair first), each eigenvector unit-norm with a deterministic
    phase.  ``u_right``/``u_left`` carry the growth-theory normalizations:
    coordinates of ``u_right`` sum to 1 and ``u_right . u_left = 1``.
    """

    b_tilde: np.ndarray
    beta_tilde: np.ndarray
    s: float
    u_right: np.ndarray
    u_left: np.ndarray
    eigen: tuple[tuple[complex, np.ndarray], ...]
    irreducible: bool
    criticality: str  # "subcritical" | "critical" | "supercritical"


def build_mean_params(params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Branching mean matrix B~ and immigration mean vector beta~.

    ``B~[i,j] = B[i,j] + sum over mu_j atoms of rate * max(0, z_i - delta_ij)``
    and ``beta~ = beta + first moment of nu``.  Exact over the atom lists.
    """
    d = params.d
    b_tilde = params.B.astype(float).copy()
    for j, m in enumerate(params.mu):
        for i in range(d):
            b_tilde[i, j] += truncated_positive(m, i, j)
    beta_tilde = params.beta + first_moment_vector(params.nu)
    return b_tilde, beta_tilde


def matrix_exponential(a: np.ndarray, t: float) -> np.ndarray:
    """exp(t * a) for a real square matrix; exp(0 * a) is exactly the identity."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not (np.all(np.isfinite(a)) and np.isfinite(t)):
        raise ValueError("matrix exponential requires finite entries")
    if t == 0.0:
        return np.eye(a.shape[0])
    return scipy.linalg.expm(t * a)


def expm_integral(a: np.ndarray, w: np.ndarray, t: float, rel_tol: float = 1e-10) -> np.ndarray:
    """Composite-Simpson evaluation of the vector integral of exp(u*a) w du over [0, t].

    Node values are generated by repeated multiplication with the one-step
    exponential (semigroup property), and the interval count is doubled
    until the result moves by less than ``rel_tol`` relatively.
    """
    a = np.asarray(a, dtype=float)
    w = np.asarray(w, dtype=float)
    if t < 0:
        raise ValueError("integration horizon must be non-negative")
    if t == 0.0 or not np.any(w):
        return np.zeros_like(w)
    prev = None
    n = 8
    while n <= 2 ** 22:
        h = t / n
        step = matrix_exponential(a, h)
        nodes = np.empty((n + 1, w.shape[0]))
        f = w.copy()
        for k in range(n + 1):
            nodes[k] = f
            f = step @ f
        weights = np.ones(n + 1)
        weights[1:-1:2] = 4.0
        weights[2:-1:2] = 2.0
        cur = (h / 3.0) * (weights @ nodes)
        if prev is not None:
            scale = max(float(np.linalg.norm(cur)), 1e-300)
            if float(np.linalg.norm(cur - prev)) <= rel_tol * scale:
                return cur
        prev = cur
        n *= 2
    raise RuntimeError("expm_integral did not converge; matrix may be ill-conditioned")


def is_irreducible(b_tilde: np.ndarray) -> bool:
    """Irreducibility via strong connectivity of the off-diagonal support graph.

    Edge j -> i whenever B~[i, j] > 0 with i != j; a 1x1 matrix is always
    irreducible.
    """
    b_tilde = np.asarray(b_tilde, dtype=float)
    d = b_tilde.shape[0]
    if d == 1:
        return True
    adj = (b_tilde > 0) & ~np.eye(d, dtype=bool)
    n_comp, _ = scipy.sparse.csgraph.connected_components(
        scipy.sparse.csr_matrix(adj), directed=True, connection="strong"
    )
    return n_comp == 1


def _phase_normalize(v: np.ndarray) -> np.ndarray:
    """Unit norm; the first component of largest modulus rotated real positive."""
    v = v / np.linalg.norm(v)
    k = int(np.argmax(np.abs(v)))
    phase = v[k] / abs(v[k])
    v = v / phase
    if np.all(np.abs(v.imag) < 1e-14):
        v = v.real + 0j
    return v


def left_eigenpairs(b_tilde: np.ndarray) -> list[tuple[complex, np.ndarray]]:
    """Left eigenpairs of B~, dominant pair first.

    Requires B~ irreducible and diagonalizable; rejects defective spectra
    (eigenvector matrix numerically rank-deficient).  Pairs are sorted by
    descending real part (ties by ascending imaginary part) and every
    eigenvector is unit-norm with the deterministic phase convention of
    ``_phase_normalize``.
    """
    b_tilde = np.asarray(b_tilde, dtype=float)
    if not is_irreducible(b_tilde):
        raise NotIrreducibleError("branching mean matrix is not irreducible")
    vals, vecs = np.linalg.eig(b_tilde.T)  # columns: left eigenvectors of b_tilde
    scale = max(float(np.linalg.norm(b_tilde)), 1e-300)
    sv = np.linalg.svd(vecs, compute_uv=False)
    if sv[-1] <= _ZERO_RTOL * sv[0]:
        raise DefectiveSpectrumError("defective spectrum: eigenvectors are numerically dependent")
    order = np.lexsort((vals.imag, -vals.real))
    pairs = []
    for idx in order:
        lam = complex(vals[idx])
        v = _phase_normalize(vecs[:, idx].astype(complex))
        residual = float(np.linalg.norm(v @ b_tilde - lam * v))
        if residual > _EIG_RESIDUAL_RTOL * scale:
            raise DefectiveSpectrumError(
                f"eigenpair residual {residual:.3e} exceeds {_EIG_RESIDUAL_RTOL:.0e} * ||B~||"
            )
        pairs.append((lam, v))
    s = pairs[0][0].real
    near_top = [lam for lam, _ in pairs if abs(lam.real - s) <= _ZERO_RTOL * max(1.0, scale)]
    if len(near_top) != 1:
        raise DefectiveSpectrumError("dominant eigenvalue is not simple")
    return pairs


def perron_and_classify(b_tilde: np.ndarray, beta_tilde: np.ndarray) -> SpectralData:
    """Perron triple, full left eigen-list and criticality class of B~.

    Errors on reducible B~ (the growth theorems all assume irreducibility)
    and on defective spectra.  ``s`` is the dominant eigenvalue (real for
    irreducible essentially non-negative matrices); the class is the sign
    of ``s`` with a ``_ZERO_RTOL``-relative window treated as critical.
    """
    b_tilde = np.asarray(b_tilde, dtype=float)
    beta_tilde = np.asarray(beta_tilde, dtype=float)
    d = b_tilde.shape[0]
    off = ~np.eye(d, dtype=bool)
    if np.any(b_tilde[off] < 0):
        raise ValueError("B~ must have non-negative off-diagonal entries")
    if not is_irreducible(b_tilde):
        raise NotIrreducibleError("branching mean matrix is not irreducible")
    pairs = left_eigenpairs(b_tilde)
    s_c, v0 = pairs[0]
    s = float(s_c.real)

    vals, vecs = np.linalg.eig(b_tilde)
    k = int(np.argmax(vals.real))
    ur = vecs[:, k]
    if np.max(np.abs(ur.imag)) > 1e-10 * np.max(np.abs(ur)):
        raise DefectiveSpectrumError("dominant right eigenvector is not real")
    ur = ur.real
    ur = ur / ur.sum()  # coordinates sum to 1; Perron vector is sign-definite
    ul = v0.real
    ul = ul / float(ur @ ul)  # u_right . u_left = 1
    if np.any(ur <= 0) or np.any(ul <= 0):
        raise DefectiveSpectrumError("Perron vectors are not strictly positive")

    tol = _ZERO_RTOL * max(1.0, float(np.linalg.norm(b_tilde)))
    if s > tol:
        criticality = "supercritical"
    elif s < -tol:
        criticality = "subcritical"
    else:
        criticality = "critical"
    return SpectralData(
        b_tilde=b_tilde,
        beta_tilde=beta_tilde,
        s=s,
        u_right=ur,
        u_left=ul,
        eigen=tuple(pairs),
        irreducible=True,
        criticality=criticality,
    )
