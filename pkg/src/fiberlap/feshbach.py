"""Smooth Feshbach-Schur map, the infrared partition and the effective operator F(lambda).

The general map works on dense matrices with an arbitrary commuting pair
(chi, chibar). For the fiber model the product space is rotated into
(K_sigma eigenbasis) x (occupation basis); there T_sigma, chi and chibar are
all diagonal and Ran chibar is a coordinate subspace, so the restricted
inverse of H_chibar is a plain dense solve.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as la

from .model import FiberModel, smooth_cutoff
from .spectral import as_dense

RANK_TOL = 1e-8


def _range_basis(chibar: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    w, V = la.eigh(0.5 * (chibar + chibar.conj().T))
    return V[:, w > tol]


@dataclass
class FeshbachResult:
    T: np.ndarray
    W: np.ndarray
    lam: complex
    chi: np.ndarray
    chibar: np.ndarray
    F: np.ndarray
    Q: np.ndarray
    Qsharp: np.ndarray
    Hbar_inv: np.ndarray  # chibar-range inverse of H_chibar - lam, embedded
    smin: float
    comm_defect: float


def feshbach_map(T, W, chi, chibar, lam: complex = 0.0, comm_tol: float = 1e-9,
                 cond_tol: float = 1e-12) -> FeshbachResult:
    """F_chi(H - lam) = T - lam + chi W chi - chi W chibar (H_chibar - lam)^{-1} chibar W chi."""
    T, W, chi, chibar = (as_dense(x) for x in (T, W, chi, chibar))
    n = T.shape[0]
    defect = float(np.abs(chi @ T - T @ chi).max())
    if defect > comm_tol:
        raise ValueError(f"hypothesis violated: ||[chi, T]|| = {defect:.3e}")
    Tl = T - lam * np.eye(n)
    R = _range_basis(chibar)
    if R.shape[1]:
        Hb = R.conj().T @ (Tl + chibar @ W @ chibar) @ R
        smin = float(la.svdvals(Hb)[-1])
        if smin < cond_tol:
            raise ValueError(f"H_chibar - lam is singular on Ran chibar (smallest singular value {smin:.3e})")
        Hbar_inv = R @ la.solve(Hb, R.conj().T)
    else:
        smin, Hbar_inv = np.inf, np.zeros_like(Tl)
    cWc = chi @ W @ chi
    X = Hbar_inv @ chibar @ W @ chi
    F = Tl + cWc - chi @ W @ chibar @ X
    Q = chi - chibar @ X
    Qs = chi - chi @ W @ chibar @ Hbar_inv @ chibar
    return FeshbachResult(T, W, lam, chi, chibar, F, Q, Qs, Hbar_inv, smin, defect)


def kernel_dim(M, scale: float, tol: float = RANK_TOL) -> int:
    s = la.svdvals(as_dense(M))
    return int(np.sum(s < tol * scale))


def random_partition(n: int, rng: np.random.Generator):
    """Random commuting (chi, chibar, T-eigenbasis) sharing one unitary frame."""
    Z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    U, _ = la.qr(Z)
    c = rng.uniform(0, 1, n)
    k = rng.integers(0, 3)
    c[:k] = 1.0  # some directions fully inside Ran chi
    c[k:2 * k] = 0.0  # and some fully outside
    chi = (U * c) @ U.conj().T
    chibar = (U * np.sqrt(1 - c**2)) @ U.conj().T
    return chi, chibar, U


def isospectrality_trial(rng: np.random.Generator, n: int, min_gap: float = 0.05):
    """One random instance of the Feshbach identities; None if the draw is ill-conditioned."""
    chi, chibar, U = random_partition(n, rng)
    t = rng.uniform(-3, 3, n)
    t = np.where(np.abs(t) < 0.3, np.sign(t) * 0.3 + t, t)
    T = (U * t) @ U.conj().T
    G = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    W = 0.25 * (G + G.conj().T)
    H = T + W
    ev = la.eigvalsh(H)
    if np.abs(ev).min() < min_gap:
        return None
    scale = float(np.abs(ev).max())
    out = {"n": n}
    try:
        fr = feshbach_map(T, W, chi, chibar, 0.0, cond_tol=min_gap)
    except ValueError:
        return None
    Hinv = la.inv(H)
    Finv = la.inv(fr.F)
    norm = max(1.0, np.linalg.norm(Hinv, 2))
    recon = fr.Q @ Finv @ fr.Qsharp + chibar @ fr.Hbar_inv @ chibar
    out["res_Hinv"] = np.linalg.norm(recon - Hinv, 2) / norm
    Finv_formula = chi @ Hinv @ chi + chibar @ la.inv(T) @ chibar
    out["res_Finv"] = np.linalg.norm(Finv - Finv_formula, 2) / max(1.0, np.linalg.norm(Finv, 2))
    kern = []
    transport = 0.0
    for lam in ev[:3]:
        try:
            fl = feshbach_map(T, W, chi, chibar, lam, cond_tol=1e-10)
        except ValueError:
            return None
        dH = kernel_dim(H - lam * np.eye(n), scale)
        dF = kernel_dim(fl.F, scale)
        kern.append((dH, dF))
        # eigenvector transport both ways
        w, V = la.eigh(H)
        phi = V[:, np.argmin(np.abs(w - lam))]
        psi = chi @ phi
        transport = max(transport, np.linalg.norm(fl.F @ psi) / max(np.linalg.norm(psi), 1e-300))
        _, s, Vh = la.svd(fl.F)
        q = fl.Q @ Vh[-1].conj()
        transport = max(transport, np.linalg.norm((H - lam * np.eye(n)) @ q) / np.linalg.norm(q))
    out["kernel"] = kern
    out["transport"] = transport / scale
    return out


def verify_isospectrality(trials: int = 200, seed: int = 0, max_dim: int = 12) -> dict:
    """Seeded random suite for the Feshbach reconstruction and kernel identities."""
    rng = np.random.default_rng(seed)
    rows, redrawn = [], 0
    while len(rows) < trials:
        n = int(rng.integers(3, max_dim + 1))
        r = isospectrality_trial(rng, n)
        if r is None:
            redrawn += 1
            continue
        rows.append(r)
    res = max(max(r["res_Hinv"], r["res_Finv"]) for r in rows)
    kern_ok = all(a == b for r in rows for a, b in r["kernel"])
    transport = max(r["transport"] for r in rows)
    return {"trials": trials, "redrawn": redrawn, "max_residual": res, "kernel_equal": kern_ok,
            "max_transport": transport, "rows": rows}


# ---------------------------------------------------------------- fiber partition

@dataclass
class SmoothPartition:
    chi: np.ndarray  # diagonal entries in the rotated product basis
    chibar: np.ndarray
    chi_f: np.ndarray  # on the low factor
    chibar_f: np.ndarray
    rho_sigma: float


class FiberFeshbach:
    """Feshbach machinery for a FiberModel with sigma > 0.

    Coordinates: index a * dim_low + l with a running over K_sigma eigenvectors
    (a = 0 is psi_sigma) and l over low-factor occupation states.
    """

    def __init__(self, model: FiberModel, rho: Optional[float] = None):
        if model.split is None:
            raise ValueError("model has no infrared split")
        if model.ground.degenerate:
            raise ValueError("degenerate P_sigma")
        self.model = model
        self.rho = model.rho if rho is None else rho
        self.sigma = model.sigma
        K = as_dense(model.K_sigma)
        Ek, Uk = la.eigh(K)
        Uk[:, 0] = model.ground.psi
        self.Ek, self.Uk = Ek, Uk
        self.nh, self.nl = model.split.high.dim, model.split.low.dim
        low = model.low
        self.Hf_low = low["H_f"].diagonal().real
        self.Pf_low = np.array([p.diagonal().real for p in low["P_f"]])
        self.F0t = low["F0"].diagonal().real - model.grad_E @ self.Pf_low  # F~_0 on F^sigma
        rs = self.rho * self.sigma
        chi_f = smooth_cutoff(self.Hf_low, rs)
        chibar_f = np.sqrt(1 - chi_f**2)
        chi = np.zeros((self.nh, self.nl))
        chibar = np.ones((self.nh, self.nl))
        chi[0], chibar[0] = chi_f, chibar_f
        self.partition = SmoothPartition(chi.ravel(), chibar.ravel(), chi_f, chibar_f, rs)
        self.T = (Ek[:, None] + self.F0t[None, :]).ravel()
        self.H = self.rotate(model.H)
        self.W = self.H - np.diag(self.T)
        self.U = self.rotate(model.U_sigma)
        self.range_idx = np.flatnonzero(self.partition.chibar > 1e-14)
        self.V_idx = np.arange(self.nl)  # Ran(P_sigma x 1)

    @property
    def E_sigma(self) -> float:
        return self.model.E_sigma

    def rotate(self, M) -> np.ndarray:
        """(U_K x 1)^dagger M (U_K x 1) for a product-space operator."""
        A = as_dense(M).reshape(self.nh, self.nl, self.nh, self.nl)
        A = np.tensordot(self.Uk.conj().T, A, axes=(1, 0))
        A = np.tensordot(A, self.Uk, axes=(2, 0))  # (a, l, l', b)
        return A.transpose(0, 1, 3, 2).reshape(self.nh * self.nl, -1)

    def unrotate(self, M: np.ndarray) -> np.ndarray:
        A = M.reshape(self.nh, self.nl, self.nh, self.nl)
        A = np.tensordot(self.Uk, A, axes=(1, 0))
        A = np.tensordot(A, self.Uk.conj().T, axes=(2, 0))
        return A.transpose(0, 1, 3, 2).reshape(self.nh * self.nl, -1)

    def chi_matrix(self) -> np.ndarray:
        return np.diag(self.partition.chi)

    def chibar_matrix(self) -> np.ndarray:
        return np.diag(self.partition.chibar)

    def commutator_defect(self) -> float:
        """||[chi, T_sigma]|| computed in the original product basis."""
        chi = self.unrotate(self.chi_matrix())
        T = as_dense(self.model.T_sigma)
        return float(np.abs(chi @ T - T @ chi).max())

    def hbar_block(self, z: complex, H1: bool = False) -> np.ndarray:
        """H_chibar - z (or H^1_chibar - z) restricted to Ran chibar."""
        r = self.range_idx
        cb = self.partition.chibar[r]
        if H1:
            Wr = self.W[np.ix_(r, r)] - self.U[np.ix_(r, r)]
        else:
            Wr = self.W[np.ix_(r, r)]
        return np.diag(self.T[r] - z) + cb[:, None] * Wr * cb[None, :]

    def F_parts(self, lam: complex):
        """(F0, W1, W2, pieces) of F(lam) on F^sigma."""
        p = self.partition
        r, v = self.range_idx, self.V_idx
        c = p.chi[v]
        cb = p.chibar[r]
        Hb = self.hbar_block(lam)
        if np.isrealobj(lam) or np.imag(lam) == 0:
            smin = float(np.abs(la.eigvalsh(0.5 * (Hb + Hb.conj().T))).min())
        else:
            smin = float(la.svdvals(Hb)[-1])
        if smin < 1e-12:
            raise ValueError(f"H_chibar - lambda singular on Ran chibar (singular value {smin:.3e})")
        B = cb[:, None] * self.W[np.ix_(r, v)] * c[None, :]  # chibar W chi
        Bl = c[:, None] * self.W[np.ix_(v, r)] * cb[None, :]  # chi W chibar
        X = la.solve(Hb, B)
        F0 = np.diag(self.E_sigma - lam + self.F0t).astype(complex if np.iscomplexobj(lam) else float)
        W1 = c[:, None] * self.U[np.ix_(v, v)] * c[None, :]
        W2 = -Bl @ X
        return F0, W1, W2, {"Hb": Hb, "X": X, "B": B, "Bl": Bl, "smin": smin}

    def F(self, lam: complex) -> np.ndarray:
        F0, W1, W2, _ = self.F_parts(lam)
        return F0 + W1 + W2

    def fw_cancellation(self) -> float:
        """||chi W chi - chi U chi||."""
        c = self.partition.chi
        D = c[:, None] * (self.W - self.U) * c[None, :]
        return float(np.abs(D).max())

    def F_full_check(self, lam: float) -> float:
        """Compare the restricted F with the general dense map on the whole space."""
        fr = feshbach_map(np.diag(self.T), self.W, self.chi_matrix(), self.chibar_matrix(), lam)
        v = self.V_idx
        return float(np.abs(fr.F[np.ix_(v, v)] - self.F(lam)).max())

    def reconstruct_inverse(self, z: complex) -> np.ndarray:
        """Q F^{-1} Q# + chibar H_chibar^{-1} chibar, in the original product basis."""
        p = self.partition
        r, v = self.range_idx, self.V_idx
        N = self.nh * self.nl
        F0, W1, W2, aux = self.F_parts(z)
        F = F0 + W1 + W2
        c = p.chi
        Q = np.zeros((N, len(v)), dtype=complex)
        Q[v, np.arange(len(v))] = c[v]
        Q[r] -= p.chibar[r][:, None] * aux["X"]
        Qs = np.zeros((len(v), N), dtype=complex)
        Qs[np.arange(len(v)), v] = c[v]
        Y = la.solve(aux["Hb"].T, aux["Bl"].T).T  # chi W chibar Hb^{-1}
        Qs[:, r] -= Y * p.chibar[r][None, :]
        M = Q @ la.solve(F, Qs)
        cb = p.chibar[r]
        M[np.ix_(r, r)] += cb[:, None] * la.inv(aux["Hb"]) * cb[None, :]
        return self.unrotate(M)

    def Finv_formula_residual(self, z: complex) -> float:
        """|| F^{-1} - (chi H^{-1} chi + chibar T^{-1} chibar) || on Ran(P_sigma x 1)."""
        v = self.V_idx
        F = self.F(z)
        Hinv = la.inv(self.H - z * np.eye(len(self.T)))
        c, cb = self.partition.chi[v], self.partition.chibar[v]
        rhs = c[:, None] * Hinv[np.ix_(v, v)] * c[None, :] + np.diag(cb**2 / (self.T[v] - z))
        Finv = la.inv(F)
        return float(np.linalg.norm(Finv - rhs, 2) / np.linalg.norm(Finv, 2))

    def hbar_resolvent_norm(self, lam: float) -> float:
        """||chibar [H_chibar - lam]^{-1} chibar||."""
        cb = self.partition.chibar[self.range_idx]
        M = cb[:, None] * la.inv(self.hbar_block(lam)) * cb[None, :]
        return float(np.abs(la.eigvalsh(0.5 * (M + M.conj().T))).max())

    def hbar_W_chi_norm(self, lam: float) -> float:
        _, _, _, aux = self.F_parts(lam)
        cb = self.partition.chibar[self.range_idx]
        return float(np.linalg.norm(cb[:, None] * aux["X"], 2))

    def lemma42_min(self, H1: bool = False) -> float:
        """min of <Phi, H_sigma Phi> (or H^1_chibar) over unit Phi in Ran chibar."""
        r = self.range_idx
        if H1:
            M = self.hbar_block(0.0, H1=True)
        else:
            M = self.rotate(self.model.H_sigma)[np.ix_(r, r)]
        return float(la.eigvalsh(0.5 * (M + M.conj().T))[0])

    def neumann(self, lam: float, max_order: int = 20) -> "NeumannReport":
        r = self.range_idx
        cb = self.partition.chibar[r]
        H1 = self.hbar_block(lam, H1=True)
        R1 = la.inv(H1)
        Ucb = cb[:, None] * self.U[np.ix_(r, r)] * cb[None, :]
        M = -Ucb @ R1
        term = R1.copy()
        total = np.zeros_like(R1)
        norms = []
        for n in range(max_order + 1):
            t = cb[:, None] * term * cb[None, :]
            nt = np.linalg.norm(t, 2)
            norms.append(nt)
            total += t
            if nt == 0:
                break
            term = term @ M
        direct = cb[:, None] * la.inv(self.hbar_block(lam)) * cb[None, :]
        norms = np.array(norms)
        nz = norms[norms > 0]
        ratio = float(np.exp(np.mean(np.diff(np.log(nz))))) if len(nz) > 1 else 0.0
        if ratio >= 1:
            raise RuntimeError(f"Neumann series diverges (ratio {ratio:.3f}); alpha too large")
        order = int(np.flatnonzero(norms > 0).max()) if nz.size else 0
        return NeumannReport(norms, ratio, order, float(np.linalg.norm(total - direct, 2)))


@dataclass
class NeumannReport:
    term_norms: np.ndarray
    ratio: float
    order: int
    residual: float


def J_lower(E: float, rho: float, sigma: float, n: int = 5, kind: str = "chebyshev"):
    """Points of J_sigma^< = E + [11, 13] rho sigma / 128."""
    a, b = E + 11 * rho * sigma / 128, E + 13 * rho * sigma / 128
    if kind == "chebyshev":
        x = np.cos((2 * np.arange(n) + 1) * np.pi / (2 * n))[::-1]
    else:
        x = np.linspace(-1, 1, n)
    return 0.5 * (a + b) + 0.5 * (b - a) * x


def check_hbarchi_bounds(fb: FiberFeshbach, lambdas):
    """Norm of the reduced resolvent and its lower bound at each lambda."""
    from .reports import SweepReport

    rs = fb.rho * fb.sigma
    l42 = (fb.lemma42_min(H1=True) - fb.E_sigma) / rs
    rep = SweepReport(["lambda", "hbar_norm", "sigma_times_norm", "lemma42_over_rho_sigma",
                       "lemma42_bound"])
    for lam in lambdas:
        v = fb.hbar_resolvent_norm(lam)
        rep.rows.append([float(lam), v, v * fb.sigma, l42, 19 / 72])
    return rep
