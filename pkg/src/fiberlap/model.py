"""Cutoffs, couplings and assembly of the fiber Hamiltonian and its pieces.

With sigma > 0 everything lives on the product space F_sigma x F^sigma of a
TensorSplit, so that operators on different factors commute exactly and the
decompositions H = H_sigma + U_sigma = T_sigma + W_sigma hold at machine
precision despite truncation.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .fock import FockBasis, ModeGrid, TensorSplit, enumerate_basis, tensor_split
from .spectral import GroundStateData, check_hermitian, ground_state

P_CRIT = 1 / 40
RHO_MAX = 0.99


def _f(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    with np.errstate(over="ignore"):
        out[pos] = np.exp(-1.0 / x[pos])
    return out


def glue(x):
    """Smooth step: 0 for x <= 0, 1 for x >= 1, g(1/2) = 1/2."""
    a, b = _f(x), _f(1 - np.asarray(x, dtype=float))
    return a / (a + b)


def glue_deriv(x):
    x = np.asarray(x, dtype=float)
    a, b = _f(x), _f(1 - x)
    inside = (x > 0) & (x < 1)
    da = np.zeros_like(x)
    db = np.zeros_like(x)
    da[inside] = a[inside] / x[inside] ** 2
    db[inside] = -b[inside] / (1 - x[inside]) ** 2
    out = np.zeros_like(x)
    out[inside] = (da * b - a * db)[inside] / (a + b)[inside] ** 2
    return out


def smooth_cutoff(r, Lam: float):
    """kappa^Lam(r): 1 on [0, 3Lam/4], 0 on [Lam, inf), glued smoothly between."""
    if Lam <= 0:
        raise ValueError("cutoff radius must be positive")
    x = (np.asarray(r, dtype=float) - 0.75 * Lam) / (0.25 * Lam)
    val = 1.0 - glue(x)
    return float(val) if np.ndim(val) == 0 else val


def smooth_cutoff_deriv(r, Lam: float):
    x = (np.asarray(r, dtype=float) - 0.75 * Lam) / (0.25 * Lam)
    return -glue_deriv(x) / (0.25 * Lam)


@dataclass
class Coupling:
    """Per-mode vector amplitudes (weights absorbed), shape (n_modes, 3)."""

    h: np.ndarray
    h_sigma: np.ndarray
    h_low: np.ndarray
    Lam: float
    sigma: float


def form_factor(grid: ModeGrid, Lam: float, power: float = 0.5) -> np.ndarray:
    """sqrt(w_i) kappa^Lam(|k_i|) / |k_i|^power per mode."""
    om = grid.omega
    return np.sqrt(grid.mode_weights) * smooth_cutoff(om, Lam) / om**power


def build_coupling(grid: ModeGrid, Lam: float, sigma: float = 0.0) -> Coupling:
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    h = form_factor(grid, Lam)[:, None] * grid.eps
    high = (grid.omega >= sigma)[:, None]
    h_sigma = np.where(high, h, 0.0)
    return Coupling(h, h_sigma, h - h_sigma, Lam, sigma)


def field_ops(basis: FockBasis, h: Optional[np.ndarray] = None):
    """H_f, P_f (3) and, if h (n_modes_grid, 3) is given, A = Phi(h) (3) on basis."""
    H_f = basis.second_quantize(np.diag(basis.omega))
    P_f = [basis.second_quantize(np.diag(basis.k[:, j])) for j in range(3)]
    A = None
    if h is not None:
        hb = h[basis.modes]
        A = [basis.field(hb[:, j]) for j in range(3)]
    return H_f, P_f, A


def assemble_field_ops(basis: FockBasis, coupling: Coupling) -> dict:
    if coupling.h.shape[0] != basis.grid.n_modes:
        raise ValueError("coupling and basis live on different grids")
    H_f, P_f, A = field_ops(basis, coupling.h)
    A_sigma = [basis.field(coupling.h_sigma[basis.modes, j]) for j in range(3)]
    A_low = [basis.field(coupling.h_low[basis.modes, j]) for j in range(3)]
    return {"H_f": H_f, "P_f": P_f, "A": A, "A_sigma": A_sigma, "A_low": A_low}


def snap_sigma(grid: ModeGrid, sigma: float, rel_tol: float = 1e-6):
    """Effective infrared cut for a requested sigma.

    A sigma strictly inside a gap between shell radii is kept. A sigma on (or
    within rel_tol of) a radius is moved to the nearest gap midpoint, with a
    warning. Returns (sigma_eff, snapped).
    """
    r = np.unique(grid.omega)
    if sigma <= r[0] or sigma > r[-1]:
        raise ValueError(f"sigma={sigma} leaves an empty factor; shell radii span "
                         f"[{r[0]:.6g}, {r[-1]:.6g}], choose sigma inside that range")
    hit = np.abs(r - sigma) <= rel_tol * sigma
    if not hit.any():
        return float(sigma), False
    i = int(np.flatnonzero(hit)[0])
    mids = [0.5 * (r[j] + r[j + 1]) for j in (i - 1, i) if 0 <= j and j + 1 < len(r)]
    mids = [m for m in mids if m > r[0]]
    new = min(mids, key=lambda m: (abs(m - sigma), m))
    warnings.warn(f"sigma={sigma} coincides with a shell radius; snapped to {new:.12g}")
    return float(new), True


@dataclass
class FiberModel:
    P: np.ndarray
    alpha: float
    Lam: float
    sigma: float
    sigma_requested: float
    rho: float
    grid: ModeGrid
    basis: FockBasis
    split: Optional[TensorSplit]
    coupling: Coupling
    H: sp.csr_matrix
    H_f: sp.csr_matrix
    P_f: list
    A: list
    A_sigma: list
    A_low: list
    H_sigma: sp.csr_matrix
    U_sigma: Optional[sp.csr_matrix] = None
    T_sigma: Optional[sp.csr_matrix] = None
    W_sigma: Optional[sp.csr_matrix] = None
    K_sigma: Optional[sp.csr_matrix] = None
    grad_K: list = field(default_factory=list)
    ground: Optional[GroundStateData] = None
    # low-factor pieces used by the Feshbach and Mourre layers
    low: dict = field(default_factory=dict)

    @property
    def E_sigma(self) -> float:
        return self.ground.E

    @property
    def grad_E(self) -> np.ndarray:
        return self.ground.grad_E

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    def digest(self) -> str:
        return self.split.digest() if self.split is not None else self.basis.digest()


def _square_form(X):
    return 0.5 * sum(x @ x for x in X)


def assemble_fiber(P, alpha: float, grid: ModeGrid, Lam: float, sigma: float = 0.0,
                   n_max: int = 2, n_high: Optional[int] = None, n_low: Optional[int] = None,
                   e_max: Optional[float] = None, rho: Optional[float] = None,
                   p_crit: float = P_CRIT, strict: bool = False,
                   check_tol: float = 1e-10) -> FiberModel:
    """Two-phase build of H(P) and the infrared decomposition.

    Phase one assembles K_sigma and grad K_sigma on F_sigma and computes the
    ground state; phase two completes T_sigma and W_sigma, which need E_sigma
    and grad E_sigma. rho defaults to min(Gap/sigma, RHO_MAX).
    """
    P = np.asarray(P, dtype=float)
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    if np.linalg.norm(P) > p_crit:
        warnings.warn(f"|P| = {np.linalg.norm(P):.4g} exceeds p_c = {p_crit:.4g}")
    ra = np.sqrt(alpha)
    basis = enumerate_basis(grid, n_max, e_max)
    sigma_req = sigma
    if sigma and sigma > 0:
        sigma, _ = snap_sigma(grid, sigma)
    coupling = build_coupling(grid, Lam, sigma or 0.0)

    if not sigma:
        H_f, P_f, A = field_ops(basis, coupling.h)
        I = sp.identity(basis.dim, format="csr")
        X = [P[j] * I - P_f[j] - ra * A[j] for j in range(3)]
        H = (_square_form(X) + H_f).tocsr()
        check_hermitian(H, name="H(P)")
        gs = ground_state(H, X, None, strict=strict)
        zero = sp.csr_matrix(H.shape)
        return FiberModel(P, alpha, Lam, 0.0, sigma_req or 0.0, np.nan, grid, basis, None,
                          coupling, H, H_f, P_f, A, A, [zero] * 3, H, zero, None, None, H, X, gs)

    split = tensor_split(basis, sigma, n_high, n_low)
    hb, lb = split.high, split.low
    Hf_h, Pf_h, As_h = field_ops(hb, coupling.h_sigma)
    Hf_l, Pf_l, Al_l = field_ops(lb, coupling.h_low)
    Ih = sp.identity(hb.dim, format="csr")
    Il = sp.identity(lb.dim, format="csr")

    # phase one: K_sigma on F_sigma and its ground state
    gradK = [(P[j] * Ih - Pf_h[j] - ra * As_h[j]).tocsr() for j in range(3)]
    K = (_square_form(gradK) + Hf_h).tocsr()
    check_hermitian(K, name="K_sigma")
    gs = ground_state(K, gradK, sigma, strict=strict)
    if rho is None:
        rho = min(gs.rho_measured, RHO_MAX)

    # phase two: everything on the product space
    kr = sp.kron
    H_f = (kr(Hf_h, Il) + kr(Ih, Hf_l)).tocsr()
    P_f = [(kr(Pf_h[j], Il) + kr(Ih, Pf_l[j])).tocsr() for j in range(3)]
    A_sigma = [kr(As_h[j], Il).tocsr() for j in range(3)]
    A_low = [kr(Ih, Al_l[j]).tocsr() for j in range(3)]
    A = [A_sigma[j] + A_low[j] for j in range(3)]
    Y = [(kr(gradK[j], Il) - kr(Ih, Pf_l[j])) for j in range(3)]
    H_sigma = (_square_form(Y) + H_f).tocsr()
    H = (_square_form([Y[j] - ra * A_low[j] for j in range(3)]) + H_f).tocsr()

    Pf2_l = _square_form(Pf_l)
    F0_low = (Pf2_l + Hf_l).tocsr()
    U = (-ra * sum(kr(gradK[j], Al_l[j]) for j in range(3))
         + 0.5 * ra * sum(kr(Ih, Al_l[j] @ Pf_l[j] + Pf_l[j] @ Al_l[j]) for j in range(3))
         + 0.5 * alpha * sum(kr(Ih, Al_l[j] @ Al_l[j]) for j in range(3))).tocsr()
    gE = gs.grad_E
    T = (kr(K, Il) + kr(Ih, F0_low) - sum(gE[j] * kr(Ih, Pf_l[j]) for j in range(3))).tocsr()
    W = (U - sum(kr(gradK[j] - gE[j] * Ih, Pf_l[j]) for j in range(3))).tocsr()

    for name, R in (("H - (H_sigma + U_sigma)", H - H_sigma - U), ("H - (T_sigma + W_sigma)", H - T - W)):
        res = abs(R).max() if R.nnz else 0.0
        if res > check_tol:
            raise RuntimeError(f"assembly residual {name} = {res:.3e} (broken tensor lift)")
    for name, M in (("H", H), ("U_sigma", U), ("T_sigma", T), ("W_sigma", W)):
        check_hermitian(M, 1e-10, name)

    low = {"H_f": Hf_l, "P_f": Pf_l, "A": Al_l, "F0": F0_low}
    return FiberModel(P, alpha, Lam, sigma, sigma_req, float(rho), grid, basis, split, coupling,
                      H, H_f, P_f, A, A_sigma, A_low, H_sigma, U, T, W, K, gradK, gs, low)


def expanded_hamiltonian(model: FiberModel) -> sp.csr_matrix:
    """H(P) from the expanded form with P, P_f, Phi(h) written out term by term."""
    P, ra, a = model.P, np.sqrt(model.alpha), model.alpha
    I = sp.identity(model.dim, format="csr")
    Pf, A = model.P_f, model.A
    H = 0.5 * (P @ P) * I + 0.5 * sum(Pf[j] @ Pf[j] for j in range(3)) + model.H_f
    H = H - sum(P[j] * Pf[j] for j in range(3)) - ra * sum(P[j] * A[j] for j in range(3))
    H = H + 0.5 * ra * sum(A[j] @ Pf[j] + Pf[j] @ A[j] for j in range(3))
    H = H + 0.5 * a * sum(A[j] @ A[j] for j in range(3))
    return H.tocsr()


def free_dispersion(basis: FockBasis, P) -> np.ndarray:
    """(P - sum n_i k_i)^2 / 2 + sum n_i |k_i| for every basis state."""
    occ = basis.states.astype(float)
    mom = occ @ basis.k
    return 0.5 * np.sum((np.asarray(P, float) - mom) ** 2, axis=1) + occ @ basis.omega


# ---------------------------------------------------------------- Nelson model

@dataclass
class NelsonModel:
    H_el: np.ndarray
    e: np.ndarray
    g: float
    mu: float
    Lam: float
    basis: FockBasis
    H: sp.csr_matrix

    def ground_energy(self) -> float:
        return ground_state(self.H).E


def position_phases(x: np.ndarray, grid: ModeGrid, axis: int = 0):
    """Diagonal phase matrices exp(-i k_axis x) for a particle on a 1D position grid."""
    x = np.asarray(x, dtype=float)
    return [np.diag(np.exp(-1j * kk[axis] * x)) for kk in grid.k]


def assemble_nelson(H_el, g: float, mu: float, Lam: float, basis: FockBasis,
                    phases=None) -> NelsonModel:
    """H^N = H_el x 1 + 1 x H_f + g phi(G_x).

    phases: per-mode matrices exp(-i k.x) on the particle space (defaults to the
    particle sitting at the origin, i.e. identities).
    """
    H_el = np.asarray(H_el)
    if np.abs(H_el - H_el.conj().T).max() > 1e-12:
        raise ValueError("H_el is not Hermitian")
    if mu < 0:
        raise ValueError("mu must be >= 0")
    e = np.linalg.eigvalsh(H_el)
    if np.ptp(e) <= 0:
        raise ValueError("H_el needs at least two distinct eigenvalues")
    n_el = H_el.shape[0]
    grid = basis.grid
    ff = form_factor(grid, Lam, power=0.5 - mu)[basis.modes]
    H_f = basis.second_quantize(np.diag(basis.omega))
    H = sp.kron(H_el, sp.identity(basis.dim)) + sp.kron(sp.identity(n_el), H_f)
    if g != 0:
        W = None
        for m, f in enumerate(ff):
            em = np.eye(n_el) if phases is None else np.asarray(phases[basis.modes[m]])
            term = f * sp.kron(em, basis.creator(m))
            W = term if W is None else W + term
        W = (W + W.conj().T) * (g / np.sqrt(2))
        H = H + W
    H = sp.csr_matrix(H)
    check_hermitian(H, 1e-12, "H^N")
    return NelsonModel(H_el, e, g, mu, Lam, basis, H)
