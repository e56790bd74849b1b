"""Dilatation generator, commutators, Mourre positivity checks and the lemma battery.

On a finite matrix the raw commutator i[H, B] has zero expectation in every
eigenvector of H (virial theorem), so a projected Mourre estimate can never
hold for it. The positivity checks therefore use the commutator form built
from the exact one-particle identities [H_f, iB] = H_f, [P_f, iB] = P_f
(and their kappa^sigma analogues), with only the interaction commutators
taken from the discretized generator. The raw version is kept as a
diagnostic.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .feshbach import FiberFeshbach, J_lower
from .fock import FockBasis, ModeGrid
from .model import FiberModel, glue, smooth_cutoff, smooth_cutoff_deriv
from .spectral import (as_dense, eig_decompose, fit_loglog, matrix_function, snap_to_gap,
                       spectral_projection)

RELAX = 0.5


def radial_stencil(grid: ModeGrid) -> np.ndarray:
    """Antisymmetric half-density d/dr along every ray, as a mode matrix."""
    M = grid.n_modes
    D = np.zeros((M, M))
    npol = grid.n_pol
    r_all = np.linalg.norm(grid.points, axis=1)
    for ray in grid.rays():
        if len(ray) < 2:
            raise ValueError("dilatation stencil needs at least 2 radial shells per ray")
        r = r_all[ray]
        cell = np.gradient(r)
        for p in range(npol):
            m = ray * npol + p
            for a in range(len(ray) - 1):
                v = 0.5 / np.sqrt(cell[a] * cell[a + 1])
                D[m[a], m[a + 1]] = v
                D[m[a + 1], m[a]] = -v
    return D


def radial_laplacian(grid: ModeGrid) -> np.ndarray:
    """Positive half-density -d^2/dr^2 along rays with zero ghost values past the ends."""
    M = grid.n_modes
    L = np.zeros((M, M))
    npol = grid.n_pol
    r_all = np.linalg.norm(grid.points, axis=1)
    for ray in grid.rays():
        r = r_all[ray]
        if len(r) < 2:
            raise ValueError("Laplacian stencil needs at least 2 radial shells per ray")
        cell = np.gradient(r)
        h = np.diff(r)
        hl = np.concatenate([[h[0]], h])
        hr = np.concatenate([h, [h[-1]]])
        for p in range(npol):
            m = ray * npol + p
            for a in range(len(r)):
                L[m[a], m[a]] = (1 / hl[a] + 1 / hr[a]) / cell[a]
                if a + 1 < len(r):
                    v = -1 / (np.sqrt(cell[a] * cell[a + 1]) * h[a])
                    L[m[a], m[a + 1]] = L[m[a + 1], m[a]] = v
    return L


@dataclass
class ConjugateOp:
    b: np.ndarray  # one-particle generator on all grid modes
    sigma: Optional[float]
    grid: ModeGrid

    def on(self, basis: FockBasis) -> sp.csr_matrix:
        m = basis.modes
        return basis.second_quantize(self.b[np.ix_(m, m)])


def build_dilatation(grid: ModeGrid, sigma: Optional[float] = None) -> ConjugateOp:
    """b = (i/2)(r D + D r) per ray; b^sigma = kappa^sigma b kappa^sigma."""
    D = radial_stencil(grid)
    R = np.diag(grid.omega)
    b = 0.5j * (R @ D + D @ R)
    b = 0.5 * (b + b.conj().T)
    if sigma is not None:
        kap = smooth_cutoff(grid.omega, sigma)
        b = kap[:, None] * b * kap[None, :]
    return ConjugateOp(b, sigma, grid)


def commutator(H, B):
    """i(HB - BH)."""
    C = 1j * (H @ B - B @ H)
    return C.tocsr() if sp.issparse(C) else C


def ib_continuum(grid: ModeGrid, Lam: float, sigma: Optional[float] = None) -> np.ndarray:
    """(i b h)(k) = -(r d/dr + 3/2) h in 3D, for h = kappa^Lam r^{-1/2} eps (optionally cut at sigma)."""
    r = grid.omega
    kap = smooth_cutoff(r, Lam)
    dk = smooth_cutoff_deriv(r, Lam)
    amp = -(r * dk + kap) / np.sqrt(r)
    out = (np.sqrt(grid.mode_weights) * amp)[:, None] * grid.eps
    if sigma is not None:
        out = np.where((r >= sigma)[:, None], out, 0.0)
    return out


def _interior(grid: ModeGrid) -> np.ndarray:
    """Mask of modes not on the first or last shell of their ray."""
    mask = np.ones(grid.n_points, bool)
    for ray in grid.rays():
        mask[ray[0]] = mask[ray[-1]] = False
    return mask[grid.mode_point]


def identity_residuals(grid: ModeGrid, Lam: float, sigma: Optional[float] = None) -> dict:
    """One-particle residuals of the dilatation identities on smooth test vectors.

    Residuals are measured on interior modes (the ghost-zero stencil is only
    first-order consistent at the ray ends), relative to the size of the
    exact right-hand side.
    """
    from .model import build_coupling

    cp = build_coupling(grid, Lam, sigma or 0.0)
    cj = build_dilatation(grid)
    b = cj.b
    om = grid.omega
    inner = _interior(grid)
    out = {}

    def rel(res, ref):
        return float(np.linalg.norm(res[inner]) / np.linalg.norm(ref[inner]))

    Hf1 = np.diag(om)
    C = 1j * (Hf1 @ b - b @ Hf1)
    h = cp.h
    out["H_f"] = max(rel(C @ h[:, j] - om * h[:, j], om * h[:, j]) for j in range(3) if np.any(h[:, j]))
    res = []
    for j in range(3):
        Pj = np.diag(grid.k[:, j])
        Cj = 1j * (Pj @ b - b @ Pj)
        for jj in range(3):
            v = h[:, jj]
            if np.any(grid.k[:, j] * v):
                res.append(rel(Cj @ v - grid.k[:, j] * v, grid.k[:, j] * v))
    out["P_f"] = max(res)
    ibh_c = ib_continuum(grid, Lam)
    ibh_d = np.stack([1j * b @ h[:, j] for j in range(3)], axis=1)
    out["Phi_h"] = rel(ibh_d - ibh_c, ibh_c)
    if sigma is not None:
        ibs_c = ib_continuum(grid, Lam, sigma)
        ibs_d = np.stack([1j * b @ cp.h_sigma[:, j] for j in range(3)], axis=1)
        # the indicator cut is not smooth: compare away from the cut shell
        keep = inner & (np.abs(om - sigma) > 2 * np.diff(np.unique(om)).max())
        ref = np.linalg.norm(ibs_c[keep])
        out["Phi_h_sigma"] = float(np.linalg.norm((ibs_d - ibs_c)[keep]) / ref) if ref > 0 else np.nan
        bs = build_dilatation(grid, sigma).b
        kap2 = smooth_cutoff(om, sigma) ** 2
        Cs = 1j * (Hf1 @ bs - bs @ Hf1)
        v = cp.h_low[:, 0] if np.any(cp.h_low[:, 0]) else cp.h_low[:, 1]
        out["H_f_sigma"] = rel(Cs @ v - kap2 * om * v, kap2 * om * v)
    return out


@dataclass
class MourreReport:
    J: tuple
    rank: int
    min_eig: float
    target: float
    margin: float
    vacuous: bool
    label: str = ""
    extra: dict = field(default_factory=dict)


def mourre_positivity(H, C, J, target: float, decomp=None, label: str = "",
                      auto_shift: bool = True) -> MourreReport:
    """min eigenvalue of Pi C Pi on Ran Pi, Pi = 1_J(H), against a target.

    C is the commutator (form) operator; pass commutator(H, B) for the raw one.
    """
    d = decomp or eig_decompose(H)
    _, rank, Jused = spectral_projection(H, J, d, auto_shift=auto_shift)
    sel = (d.values >= Jused[0]) & (d.values <= Jused[1])
    if rank == 0:
        return MourreReport(tuple(Jused), 0, np.nan, target, np.nan, True, label)
    V = d.vectors[:, sel]
    M = V.conj().T @ (C @ V)
    mn = float(la.eigvalsh(0.5 * (M + M.conj().T))[0])
    return MourreReport(tuple(Jused), rank, mn, target, mn - target, False, label,
                        {"trace": float(np.trace(M).real)})


def fiber_commutator_form(model: FiberModel, conj: ConjugateOp):
    """[H(P), iB] assembled from the exact identities, i.e.

    -1/2 (X.Y + Y.X) + H_f with X = P - P_f - alpha^{1/2} Phi(h),
    Y = P_f - alpha^{1/2} Phi(i b h), b the discretized generator.
    """
    if model.split is not None:
        raise ValueError("use a sigma = 0 model for the full-fiber commutator")
    basis = model.basis
    ra = np.sqrt(model.alpha)
    m = basis.modes
    ibh = 1j * conj.b[np.ix_(m, m)] @ model.coupling.h[m]
    I = sp.identity(basis.dim, format="csr")
    X = [model.P[j] * I - model.P_f[j] - ra * model.A[j] for j in range(3)]
    Y = [model.P_f[j] - ra * basis.field(ibh[:, j]) for j in range(3)]
    C = -0.5 * sum(X[j] @ Y[j] + Y[j] @ X[j] for j in range(3)) + model.H_f
    return C.tocsr()


def bump_f_sigma(sigma: float, rho: float):
    """f_sigma: 1 on [rho sigma/16, rho sigma/8], 0 outside [3, 9] rho sigma/64."""
    u = rho * sigma / 64

    def f(x):
        x = np.asarray(x, dtype=float)
        return glue((x - 3 * u) / u) * (1 - glue((x - 8 * u) / u))
    return f


def mourre_fiber(model: FiberModel, relax: float = RELAX, conj: Optional[ConjugateOp] = None,
              sigma: Optional[float] = None) -> MourreReport:
    """Projected commutator on J = E + [sigma, 2 sigma] against relax * sigma / 2."""
    sig = sigma
    conj = conj or build_dilatation(model.grid)
    H = model.H
    d = eig_decompose(H)
    E = d.values[0]
    C = fiber_commutator_form(model, conj)
    rep = mourre_positivity(H, C, (E + sig, E + 2 * sig), relax * sig / 2, d, "T2.1")
    B = conj.on(model.basis)
    raw = mourre_positivity(H, commutator(H, B), rep.J, relax * sig / 2, d, auto_shift=False)
    rep.extra["raw_min_eig"] = raw.min_eig
    rep.extra["raw_trace"] = raw.extra.get("trace", np.nan)
    if model.alpha == 0:
        rep.extra["form_margin"] = intermediate_bound_margin(model, C, rep.J, d)
    rep.extra["double_commutator"] = double_commutator_ratio(H, B)
    return rep


def intermediate_bound_margin(model: FiberModel, C, J, decomp=None) -> float:
    """min eig of Pi ([H, iB] - H + P^2/2) Pi on Ran Pi; >= 0 at alpha = 0."""
    d = decomp or eig_decompose(model.H)
    sel = (d.values >= J[0]) & (d.values <= J[1])
    V = d.vectors[:, sel]
    if V.shape[1] == 0:
        return np.inf
    rhs = model.H - 0.5 * float(model.P @ model.P) * sp.identity(model.dim)
    M = V.conj().T @ ((C - rhs) @ V)
    return float(la.eigvalsh(0.5 * (M + M.conj().T))[0])


def double_commutator_ratio(H, B) -> float:
    """||[[H, iB], iB]|| / ||H||, recorded in place of a C^2(B) proof."""
    Hd, Bd = as_dense(H), as_dense(B)
    C = commutator(Hd, Bd)
    return float(np.linalg.norm(commutator(C, Bd), 2) / np.linalg.norm(Hd, 2))


class FLambda:
    """F(lambda) with its decomposition and commutator forms on F^sigma."""

    def __init__(self, fb: FiberFeshbach, lam: float):
        self.fb = fb
        self.lam = lam
        model = fb.model
        self.F0, self.W1, self.W2, _ = fb.F_parts(lam)
        self.F = self.F0 + self.W1 + self.W2
        low = model.split.low
        self.conj = build_dilatation(model.grid, model.sigma)
        self.Bs = as_dense(self.conj.on(low))
        om = low.omega
        kap2 = smooth_cutoff(om, model.sigma) ** 2
        dG_k = low.states @ (kap2[:, None] * low.k)  # dGamma(kappa^2 k), diagonal
        dG_w = low.states @ (kap2 * om)
        Pf = fb.Pf_low.T
        self.C0 = np.diag(np.sum(Pf * dG_k, axis=1) + dG_w - dG_k @ model.grad_E)
        self.CW1 = commutator(self.W1, self.Bs)
        self.CW2 = commutator(self.W2, self.Bs)
        self.C = self.C0 + self.CW1 + self.CW2
        self.shift = lam - fb.E_sigma  # F~ = F + shift

    def theorem51(self, relax: float = RELAX) -> MourreReport:
        fb = self.fb
        rs = fb.rho * fb.sigma
        F = 0.5 * (self.F + self.F.conj().T)
        rep = mourre_positivity(F, self.C, (-rs / 128, rs / 128), relax * rs / 128, label="T5.1")
        raw = mourre_positivity(F, commutator(F, self.Bs), rep.J, relax * rs / 128, auto_shift=False)
        rep.extra["raw_min_eig"] = raw.min_eig
        rep.extra["lambda"] = self.lam
        return rep


def lemma_quantities(fb: FiberFeshbach, lam: float) -> dict:
    """Measured quantities of the section-5 lemma chain at one (model, lambda)."""
    fl = FLambda(fb, lam)
    model = fb.model
    rs = fb.rho * fb.sigma
    sig = fb.sigma
    out = {}
    out["W1"] = float(np.linalg.norm(fl.W1, 2))
    out["W2"] = float(np.linalg.norm(fl.W2, 2))
    out["comm_W1"] = float(np.linalg.norm(fl.CW1, 2))
    out["comm_W2"] = float(np.linalg.norm(fl.CW2, 2))
    f = bump_f_sigma(sig, fb.rho)
    Ft = 0.5 * (fl.F + fl.F.conj().T) + fl.shift * np.eye(len(fl.F))
    F0t = fb.F0t
    fF = matrix_function(Ft, f)
    fF0 = np.diag(f(F0t))
    out["f_diff"] = float(np.linalg.norm(fF - fF0, 2))
    # L5.3: [F0, iB^sigma] - H_f/2 on Ran 1(H_f <= delta rho sigma), delta = 1/4
    sel = fb.Hf_low <= 0.25 * rs
    D = np.diag(fl.C0)[sel] - 0.5 * fb.Hf_low[sel]
    out["L5.3_min"] = float(D.min())
    out["L5.3_C"] = float(max(0.0, -D.min()) / sig**2)
    # L5.4
    out["L5.4"] = lemma54(fb, lam, 0.25 * rs)
    # L5.7
    F = 0.5 * (fl.F + fl.F.conj().T)
    d = eig_decompose(F)
    tol = 1e-9 * max(1.0, np.abs(d.values).max())
    a, b = snap_to_gap(d.values, -rs / 128, tol), snap_to_gap(d.values, rs / 128, tol)
    Pd = _proj(d, a, b)
    a2 = snap_to_gap(d.values + fl.shift, rs / 16, tol) - fl.shift
    b2 = snap_to_gap(d.values + fl.shift, rs / 8, tol) - fl.shift
    Pd2 = _proj(d, a2, b2)
    out["L5.7"] = float(np.abs(Pd - Pd @ Pd2).max())
    out["L5.7_rank"] = int(round(np.trace(Pd).real))
    # L5.9
    band = ((fb.Hf_low >= rs / 32) & (fb.Hf_low <= rs / 4)).astype(float)
    out["L5.9"] = float(np.abs(f(F0t) * band - f(F0t)).max())
    # L5.10
    out["L5.10"] = float(np.linalg.norm(fl.C @ fF0, 2) / sig)
    return out


def _proj(d, a, b):
    sel = (d.values >= a) & (d.values <= b)
    V = d.vectors[:, sel]
    return V @ V.conj().T


def lemma54(fb: FiberFeshbach, lam: float, delta: float) -> float:
    """max_j ||[H_chibar - lam]^{-1/2} chibar ((grad K - grad E)_j P_sigma) x 1(H_f <= delta)|| / (1 + sqrt(delta/sigma))."""
    model = fb.model
    r = fb.range_idx
    Hb = fb.hbar_block(lam)
    w, V = la.eigh(0.5 * (Hb + Hb.conj().T))
    if w.min() <= 0:
        return np.inf
    Mhalf = (V * w**-0.5) @ V.conj().T
    sel = (fb.Hf_low <= delta).astype(float)
    vals = []
    nh, nl = fb.nh, fb.nl
    for j in range(3):
        G = as_dense(model.grad_K[j]) - model.grad_E[j] * np.eye(nh)
        col = fb.Uk.conj().T @ (G @ model.ground.psi)  # components along K eigenvectors
        # operator phi -> (col x (sel * phi)) from F^sigma into the product space
        Op = np.zeros((nh * nl, nl), dtype=complex)
        for a in range(nh):
            Op[a * nl:(a + 1) * nl] = np.diag(col[a] * sel)
        Op = fb.partition.chibar[:, None] * Op
        vals.append(np.linalg.norm(Mhalf @ Op[r], 2))
    return float(max(vals) / (1 + np.sqrt(delta / fb.sigma)))


@dataclass
class LemmaRow:
    lemma: str
    alpha: float
    sigma: float
    lam: float
    quantity: str
    value: float
    bound: str
    exponent: float = np.nan
    passed: Optional[bool] = None


@dataclass
class LemmaReport:
    rows: list
    exponents: dict

    def passed(self) -> bool:
        return all(r.passed is not False for r in self.rows)


# lemma id, measured key, bound form, alpha-exponent tolerance (None: not a scaling row)
LEMMA_ROWS = [
    ("L5.3", "L5.3_C", "[F0, iB^s] >= H_f/2 - C sigma^2", None),
    ("L5.4", "L5.4", "<= C (1 + delta^1/2 sigma^-1/2)", None),
    ("L5.5", "W1", "||W1|| <= C alpha^1/2 sigma", 0.10),
    ("L5.5", "W2", "||W2|| <= C alpha^1/2 sigma", 0.10),
    ("L5.6", "comm_W1", "||[W1, iB^s]|| <= C alpha^1/2 sigma", 0.15),
    ("L5.6", "comm_W2", "||[W2, iB^s]|| <= C alpha^1/2 sigma", 0.15),
    ("L5.7", "L5.7", "1_D(F) = 1_D(F) 1_D'(F~)", None),
    ("L5.8", "f_diff", "||f(F~) - f(F~0)|| <= C alpha^1/2", 0.10),
    ("L5.9", "L5.9", "f(F~0) 1(rs/32 <= H_f <= rs/4) = f(F~0)", None),
    ("L5.10", "L5.10", "||[F, iB^s] f(F~0)|| <= C sigma", None),
]


def lemma_suite(build, alphas=(1e-4, 4e-4, 1.6e-3), lam_point: float = 12 / 128,
                exp_tol: Optional[float] = None, identity_tol: float = 1e-9) -> LemmaReport:
    """Run the lemma chain across an alpha grid.

    build(alpha) -> FiberModel; lambda = E + lam_point * rho sigma, inside
    J_sigma^<. Scaling rows get a fitted alpha-exponent compared with 1/2
    (tolerance per row, or exp_tol for all); identity rows pass at
    identity_tol.
    """
    from .spectral import ground_state

    raw = []
    for a in alphas:
        model = build(a)
        fb = FiberFeshbach(model)
        E = ground_state(model.H).E
        lam = E + lam_point * fb.rho * fb.sigma
        q = lemma_quantities(fb, lam)
        raw.append((a, fb.sigma, lam, q))
    exps = {}
    rows = []
    for lid, key, bound, tol in LEMMA_ROWS:
        y = [q[key] for *_, q in raw]
        e = np.nan
        if tol is not None:
            e = fit_loglog(alphas, y) if min(y) > 0 else np.nan
            exps[key] = e
        for a, sig, lam, q in raw:
            if tol is not None:
                ok = bool(abs(e - 0.5) <= (exp_tol or tol)) if a > 0 else None
            elif lid in ("L5.7", "L5.9"):
                ok = bool(q[key] <= identity_tol)
            else:
                ok = bool(np.isfinite(q[key]))
            rows.append(LemmaRow(lid, a, sig, float(lam), key, float(q[key]), bound, e, ok))
    return LemmaReport(rows, exps)
