"""Eigendecomposition, functional calculus, spectral projections, ground states."""
from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DENSE_LIMIT = 4000
EDGE_TOL = 1e-9
DEGENERACY_TOL = 1e-8


def as_dense(H) -> np.ndarray:
    return H.toarray() if sp.issparse(H) else np.asarray(H)


def op_norm(H) -> float:
    """Spectral norm (dense) or a cheap max-row-sum bound for large sparse input."""
    if sp.issparse(H):
        if H.shape[0] <= DENSE_LIMIT:
            return float(np.linalg.norm(H.toarray(), 2))
        return float(spla.norm(H, 1))
    return float(np.linalg.norm(H, 2)) if H.size else 0.0


def hermiticity_defect(H) -> float:
    D = H - H.conj().T
    if sp.issparse(D):
        return float(abs(D).max()) if D.nnz else 0.0
    return float(np.abs(D).max()) if D.size else 0.0


def check_hermitian(H, tol: float = 1e-12, name: str = "operator"):
    scale = max(1.0, float(abs(H).max()) if H.shape[0] else 1.0)
    d = hermiticity_defect(H)
    if d > tol * scale:
        raise ValueError(f"{name} is not Hermitian (defect {d:.3e})")


def operator_digest(H) -> str:
    A = as_dense(H)
    return hashlib.sha256(np.ascontiguousarray(A).tobytes()).hexdigest()[:16]


def fix_phase(v: np.ndarray) -> np.ndarray:
    """Rotate v so its largest-magnitude component is real positive."""
    i = int(np.argmax(np.abs(v)))
    ph = v[i] / abs(v[i])
    w = v / ph
    return w.real.copy() if np.isrealobj(v) or np.abs(w.imag).max() == 0 else w


@dataclass
class EigDecomp:
    values: np.ndarray
    vectors: np.ndarray
    source: str
    complete: bool

    def residual(self, H) -> float:
        return float(np.abs(H @ self.vectors - self.vectors * self.values).max())


def eig_decompose(H, m: Optional[int] = None) -> EigDecomp:
    """Full dense decomposition, or the lowest m+1 pairs when m is given.

    Lowest-m requests on matrices below DENSE_LIMIT are served by the dense
    solver too; larger ones use Lanczos with a fixed start vector.
    """
    check_hermitian(H)
    n = H.shape[0]
    if m is None or n <= DENSE_LIMIT or m + 1 >= n - 1:
        w, V = la.eigh(as_dense(H))
        if m is not None:
            w, V = w[: m + 1], V[:, : m + 1]
        complete = m is None or m + 1 >= n
    else:
        v0 = np.ones(n) / np.sqrt(n)
        w, V = spla.eigsh(sp.csr_matrix(H), k=m + 1, which="SA", v0=v0, tol=1e-13)
        order = np.argsort(w)
        w, V = w[order], V[:, order]
        complete = False
        res = np.abs(H @ V - V * w).max()
        if res > 1e-8 * max(1.0, abs(w).max()):
            raise RuntimeError(f"Lanczos did not converge (residual {res:.3e})")
    V = np.column_stack([fix_phase(V[:, j]) for j in range(V.shape[1])]) if V.size else V
    return EigDecomp(w, V, operator_digest(H) if n <= DENSE_LIMIT else "", complete)


def matrix_function(H, f: Callable, decomp: Optional[EigDecomp] = None) -> np.ndarray:
    """f(H) = V f(D) V^dagger by exact eigendecomposition."""
    d = decomp or eig_decompose(H)
    fv = np.asarray(f(d.values))
    if not np.all(np.isfinite(fv)):
        raise ValueError("function undefined on an eigenvalue")
    return (d.vectors * fv) @ d.vectors.conj().T


def snap_to_gap(values: np.ndarray, x: float, tol: float) -> float:
    """Move x to the midpoint of the spectral gap it lies in.

    If x sits within tol of an eigenvalue the nearer of the two adjacent gap
    midpoints is used. Outside the spectrum x is returned unchanged.
    """
    v = np.sort(values)
    if x < v[0] - tol or x > v[-1] + tol:
        return x
    near = np.abs(v - x) <= tol
    if not near.any():
        i = np.searchsorted(v, x)
        return 0.5 * (v[i - 1] + v[i])
    j = int(np.flatnonzero(near)[0])
    jj = int(np.flatnonzero(near)[-1])
    lo = 0.5 * (v[j - 1] + v[j]) if j > 0 else v[0] - 1.0
    hi = 0.5 * (v[jj] + v[jj + 1]) if jj + 1 < len(v) else v[-1] + 1.0
    return lo if abs(x - lo) <= abs(hi - x) else hi


def spectral_projection(H, J: Sequence[float], decomp: Optional[EigDecomp] = None,
                        edge_tol: float = EDGE_TOL, auto_shift: bool = False):
    """Projection onto the eigenvectors with eigenvalue in the closed interval J.

    Returns (projection, rank, J_used). Eigenvalues within edge_tol*||H|| of an
    endpoint raise, unless auto_shift moves the endpoint to a gap midpoint.
    """
    d = decomp or eig_decompose(H)
    a, b = float(J[0]), float(J[1])
    tol = edge_tol * max(1.0, float(np.abs(d.values).max()))
    if auto_shift:
        a, b = snap_to_gap(d.values, a, tol), snap_to_gap(d.values, b, tol)
    for e in (a, b):
        hit = np.abs(d.values - e) <= tol
        if hit.any():
            raise ValueError(f"eigenvalue {d.values[hit][0]:.12g} within {tol:.1e} of interval "
                             f"endpoint {e:.12g} (boundary ambiguity)")
    sel = (d.values >= a) & (d.values <= b)
    V = d.vectors[:, sel]
    return V @ V.conj().T, int(sel.sum()), (a, b)


@dataclass
class GroundStateData:
    E: float
    psi: np.ndarray
    gap: float
    rho_measured: float
    degenerate: bool
    grad_E: np.ndarray
    values: np.ndarray


def ground_state(K, grad_K: Sequence = (), sigma: Optional[float] = None, n_extra: int = 4,
                 strict: bool = False) -> GroundStateData:
    """Ground energy, phase-fixed ground vector, gap and Feynman-Hellmann gradient."""
    d = eig_decompose(K, m=min(n_extra, K.shape[0] - 1))
    E = float(d.values[0])
    psi = d.vectors[:, 0]
    gap = float(d.values[1] - E) if len(d.values) > 1 else np.inf
    tol = DEGENERACY_TOL * (sigma if sigma else 1.0)
    degenerate = not gap > tol
    if degenerate:
        msg = f"ground state degenerate: gap {gap:.3e} <= {tol:.1e}"
        if strict:
            raise ValueError(msg)
        warnings.warn(msg)
    grad = []
    for G in grad_K:
        val = np.vdot(psi, G @ psi)
        if abs(val.imag) > 1e-10:
            raise ValueError("non-real Feynman-Hellmann expectation")
        grad.append(val.real)
    rho = gap / sigma if sigma else np.nan
    return GroundStateData(E, psi, gap, rho, degenerate, np.array(grad), d.values)


def operator_inequality(A, B, restriction=None) -> float:
    """Smallest eigenvalue of A - B on the range of the given projection."""
    if A.shape != B.shape:
        raise ValueError("basis mismatch")
    D = as_dense(A - B)
    D = 0.5 * (D + D.conj().T)
    if restriction is None:
        return float(la.eigvalsh(D)[0])
    Pi = as_dense(restriction)
    w, V = la.eigh(0.5 * (Pi + Pi.conj().T))
    R = V[:, w > 0.5]
    if R.shape[1] == 0:
        return np.inf
    return float(la.eigvalsh(R.conj().T @ D @ R)[0])


def fit_loglog(x, y) -> float:
    """Least-squares slope of log y against log x."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def verify_prop31(P, alpha: float, grid, Lam: float, sigmas, n_max: int = 2,
                  n_high=None, n_low=None, subadd: bool = True, k_points=None):
    """Gap, energy convergence, smoothness and subadditivity of E_sigma over sigma.

    Subadditivity (E_sigma(P - k) >= E_sigma(P) - |k|/3) is checked at the grid
    points (or k_points); the margin is the minimum of the left side minus the right.
    """
    from .model import assemble_fiber
    from .reports import SweepReport

    P = np.asarray(P, float)
    E0 = ground_state(assemble_fiber(P, alpha, grid, Lam, 0.0, n_max=n_max).H).E
    ks = grid.points if k_points is None else np.asarray(k_points, float)

    def Es(Q, s):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            m = assemble_fiber(Q, alpha, grid, Lam, s, n_max=n_max, n_high=n_high, n_low=0)
        return m

    rep = SweepReport(["sigma", "E_sigma", "E0", "abs_diff", "gap", "gap_over_sigma",
                       "free_energy_dev", "free_gradient_dev", "subadd_margin"])
    for s in sigmas:
        m = Es(P, s)
        E = m.E_sigma
        margin = np.nan
        if subadd:
            margin = min(Es(P - k, s).E_sigma - E + np.linalg.norm(k) / 3 for k in ks)
        rep.rows.append([m.sigma, E, E0, abs(E - E0), m.ground.gap, m.ground.gap / m.sigma,
                         abs(E - 0.5 * P @ P), float(np.linalg.norm(m.grad_E - P)), margin])
    return rep
