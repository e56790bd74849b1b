"""Weighted resolvents, limiting-absorption sweeps, Hölder fits, local decay, LAP transfer."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.integrate import trapezoid

from .fock import FockBasis
from .mourre import build_dilatation, radial_laplacian
from .reports import SweepReport
from .spectral import EigDecomp, as_dense, eig_decompose

EPS_DEFAULT = tuple(np.geomspace(1e-1, 1e-4, 8))


@dataclass
class WeightOp:
    kind: str  # "y" for dGamma(<y>) + 1, "B" for <B>
    s: float
    W: np.ndarray
    values: np.ndarray
    vectors: np.ndarray

    def power(self, p: float) -> np.ndarray:
        return (self.vectors * self.values**p) @ self.vectors.conj().T

    @property
    def inv_s(self) -> np.ndarray:
        return self.power(-self.s)

    def compress(self, idx: np.ndarray) -> "WeightOp":
        """Compression to the coordinate subspace idx (still >= 1)."""
        W = self.W[np.ix_(idx, idx)]
        return _weight_from_matrix(self.kind, self.s, W)


def _check_s(s: float):
    if not 0.5 < s <= 1:
        raise ValueError(f"weight exponent s must lie in (1/2, 1], got {s}")


def _weight_from_matrix(kind: str, s: float, W) -> WeightOp:
    W = as_dense(W)
    W = 0.5 * (W + W.conj().T)
    w, V = la.eigh(W)
    if w[0] < 1 - 1e-10:
        raise ValueError(f"weight not >= 1 (min eigenvalue {w[0]:.3e})")
    return WeightOp(kind, s, W, w, V)


def one_particle_y(grid, modes=None) -> np.ndarray:
    """<y> = sqrt(1 + y^2), y^2 the radial half-density Laplacian along rays."""
    L = radial_laplacian(grid)
    if modes is not None:
        L = L[np.ix_(modes, modes)]
    w, V = la.eigh(L)
    return (V * np.sqrt(1 + w)) @ V.T


def build_weight(kind: str, s: float, basis: Optional[FockBasis] = None, B=None) -> WeightOp:
    _check_s(s)
    if kind == "y":
        if basis is None:
            raise ValueError("y-weight needs a Fock basis")
        y1 = one_particle_y(basis.grid, basis.modes)
        W = basis.second_quantize(y1) + sp.identity(basis.dim)
        return _weight_from_matrix("y", s, W)
    if kind == "B":
        if B is None:
            raise ValueError("B-weight needs the conjugate operator")
        Bd = as_dense(B)
        return _weight_from_matrix("B", s, _sqrt_psd(np.eye(len(Bd)) + Bd @ Bd.conj().T))
    raise ValueError(f"unknown weight kind {kind!r}")


def _sqrt_psd(M):
    w, V = la.eigh(0.5 * (M + M.conj().T))
    return (V * np.sqrt(np.clip(w, 0, None))) @ V.conj().T


def resolvent_norm(H, z: complex, Ws: Optional[np.ndarray] = None,
                   decomp: Optional[EigDecomp] = None) -> float:
    """Largest singular value of Ws (H - z)^{-1} Ws (Ws = W^{-s}, identity if None)."""
    if np.imag(z) == 0:
        raise ValueError("resolvent_norm needs Im z != 0")
    n = H.shape[0]
    if decomp is not None:
        M = decomp.vectors if Ws is None else Ws @ decomp.vectors
        G = (M / (decomp.values - z)) @ M.conj().T
    else:
        A = as_dense(H) - z * np.eye(n)
        X = la.solve(A, np.eye(n) if Ws is None else Ws)
        res = np.abs(A @ X - (np.eye(n) if Ws is None else Ws)).max()
        if res > 1e-8 * max(1.0, np.abs(X).max()):
            raise RuntimeError(f"shifted solve breakdown (residual {res:.3e})")
        G = X if Ws is None else Ws @ X
    return float(np.linalg.norm(G, 2))


@dataclass
class SweepConfig:
    J: tuple
    lambdas: Sequence[float]
    eps: Sequence[float] = EPS_DEFAULT
    side: int = 1
    s: float = 1.0
    kind: str = "y"

    def __post_init__(self):
        e = np.asarray(self.eps, float)
        if np.any(e <= 0) or np.any(np.diff(e) >= 0):
            raise ValueError("eps schedule must be positive and strictly decreasing")
        if self.side not in (1, -1):
            raise ValueError("side must be +1 or -1")
        _check_s(self.s)


def lap_sweep(H, config: SweepConfig, weight: Optional[WeightOp] = None,
              decomp: Optional[EigDecomp] = None, E: Optional[float] = None) -> SweepReport:
    """Weighted resolvent norms on the (lambda, eps) grid with stabilization diagnostics."""
    d = decomp or eig_decompose(H)
    E = d.values[0] if E is None else E
    if config.J[0] <= E:
        raise ValueError(f"interval not ⊂ (E, ∞): J = {tuple(config.J)}, E = {E:.12g}")
    Ws = None if weight is None else weight.power(-config.s)
    eps = np.asarray(config.eps, float)
    rows, summary = [], {}
    for lam in config.lambdas:
        near = bool(np.abs(d.values - lam).min() <= 10 * eps[-1])
        norms = [resolvent_norm(H, lam + 1j * config.side * e, Ws, d) for e in eps]
        for e, v in zip(eps, norms):
            rows.append([float(lam), float(e), v, int(near)])
        change = abs(norms[-1] - norms[-2]) / norms[-1]
        summary[f"{lam:.17g}"] = {"rel_change": change, "near_eigenvalue": near,
                                  "monotone": bool(np.all(np.diff(norms) >= -1e-10 * max(norms)))}
    return SweepReport(["lambda", "eps", "norm", "near_eig"], rows, summary)


def weighted_resolvent(d: EigDecomp, z: complex, Ws: Optional[np.ndarray]) -> np.ndarray:
    M = d.vectors if Ws is None else Ws @ d.vectors
    return (M / (d.values - z)) @ M.conj().T


@dataclass
class HolderFit:
    exponent: float
    stderr: float
    n_pairs: int
    gaps: np.ndarray
    diffs: np.ndarray


def holder_fit(H, weight: Optional[WeightOp], s: float, pairs, eps: float = 1e-4,
               decomp: Optional[EigDecomp] = None) -> HolderFit:
    """Slope of log ||R_w(lam) - R_w(lam')|| against log |lam - lam'| at fixed eps."""
    d = decomp or eig_decompose(H)
    Ws = None if weight is None else weight.power(-s)
    pairs = [(a, b) for a, b in pairs if a != b]
    if len(pairs) < 4:
        raise ValueError(f"Hölder fit needs at least 4 distinct pairs, got {len(pairs)}")
    gaps, diffs = [], []
    for a, b in pairs:
        D = weighted_resolvent(d, a + 1j * eps, Ws) - weighted_resolvent(d, b + 1j * eps, Ws)
        gaps.append(abs(a - b))
        diffs.append(np.linalg.norm(D, 2))
    x, y = np.log(gaps), np.log(diffs)
    coef, cov = np.polyfit(x, y, 1, cov=True)
    slope, err = coef[0], float(np.sqrt(cov[0, 0]))
    return HolderFit(float(slope), err, len(pairs), np.array(gaps), np.array(diffs))


def midpoint_pairs(values, center: float, n: int = 8, max_offset: Optional[int] = None):
    """Pairs of spectral-gap midpoints around center, offsets geometric in level index.

    Gap midpoints keep every lambda a fixed fraction of a level spacing away
    from the spectrum, so the fixed eps is never resolving a single pole.
    """
    v = np.unique(np.round(np.sort(values), 12))
    mids = 0.5 * (v[1:] + v[:-1])
    i0 = int(np.argmin(np.abs(mids - center)))
    room = len(mids) - 1 - i0
    hi = max_offset or max(2, len(mids) // 8)
    hi = min(hi, room)
    js = np.unique(np.geomspace(1, max(hi, 1), n).astype(int))
    return [(mids[i0], mids[i0 + j]) for j in js if i0 + j < len(mids)]


@dataclass
class DecayReport:
    times: np.ndarray
    norms: np.ndarray
    exponent: float
    reference: float
    window: tuple
    t_rec: float
    floor: float
    norm0: float
    unitarity: float
    kato_ratio: float = np.nan
    descriptor: dict = field(default_factory=dict)

    def refit(self) -> float:
        sel = (self.times >= self.window[0]) & (self.times <= self.window[1])
        return float(-np.polyfit(np.log(self.times[sel]), np.log(self.norms[sel]), 1)[0])


def local_decay(H, weight: Optional[WeightOp], s: float, phi: np.ndarray,
                f: Optional[Callable] = None, times=None, decomp: Optional[EigDecomp] = None,
                t_frac: float = 0.1, n_times: int = 40, floor_factor: float = 100.0,
                descriptor: Optional[dict] = None) -> DecayReport:
    """||W^{-s} e^{-itH} f(H) phi|| on a time grid, with a tail fit below the recurrence time.

    Admissible times are t <= t_frac * recurrence time with the norm above
    floor_factor times the recurrence floor (the long-time average); the fit
    uses the last 0.6 decade of admissible times.
    """
    d = decomp or eig_decompose(H)
    Ws = np.eye(H.shape[0]) if weight is None else weight.power(-s)
    c = d.vectors.conj().T @ phi
    if f is not None:
        c = c * f(d.values)
    amp = np.abs(c) > 1e-14 * max(1.0, np.abs(c).max())
    lev = np.unique(np.round(d.values[amp], 10))
    if len(lev) < 2:
        raise ValueError("filtered state occupies < 2 levels: refine the grid")
    t_rec = 1.0 / np.diff(lev).min()
    M = Ws @ d.vectors
    # long-time average of the squared norm (dephased cross terms)
    grp = np.round(d.values, 10)
    floor2 = 0.0
    for e in np.unique(grp[amp]):
        g = grp == e
        floor2 += np.linalg.norm(M[:, g] @ c[g]) ** 2
    floor = float(np.sqrt(floor2))
    t_hi = t_frac * t_rec
    if times is None:
        times = np.concatenate([[0.0], np.geomspace(t_hi / 200, t_hi, n_times)])
    times = np.asarray(times, float)
    ph = np.exp(-1j * np.outer(times, d.values))
    norms = np.linalg.norm((ph * c) @ M.T, axis=1)
    unit = float(np.abs(np.linalg.norm(ph * c, axis=1) - np.linalg.norm(c)).max())
    adm = (times > 0) & (times <= t_hi) & (norms > floor_factor * floor)
    sel = adm & (times >= (times[adm].max() / 4 if adm.any() else np.inf))
    if sel.sum() < 3:
        raise ValueError(f"empty decay-fit window: max norm/floor = {norms.max() / floor:.3g} "
                         f"< {floor_factor:g} (spectrum too sparse): refine the grid")
    tt = times[sel]
    exp_ = float(-np.polyfit(np.log(tt), np.log(norms[sel]), 1)[0])
    # Kato smoothness check on the window: int ||W e^{-itH} phi||^2 dt <= 2 sup ||W Im R W|| ||phi||^2
    pos = times > 0
    integral = float(trapezoid(norms[pos] ** 2, times[pos]))
    eps = 1.0 / t_hi
    lam = d.values[amp]
    sup = max(np.linalg.norm(_im_resolvent(M, d.values, l, eps), 2) for l in lam[::max(1, len(lam) // 32)])
    kato = integral / (2 * np.e * sup * np.linalg.norm(c) ** 2)
    return DecayReport(times, norms, exp_, s - 0.5, (float(tt[0]), float(tt[-1])), float(t_rec),
                       floor, float(norms[0]) if times[0] == 0 else np.nan, unit, float(kato),
                       descriptor or {})


def _im_resolvent(M, w, lam, eps):
    g = eps / ((w - lam) ** 2 + eps**2)
    return (M * g) @ M.conj().T


def gaussian_one_photon(basis: FockBasis, center: float, width: float, mode_filter=None) -> np.ndarray:
    """Normalized one-photon state with a Gaussian radial profile (half-density amplitudes)."""
    g = basis.grid
    r = g.omega
    amp = np.sqrt(g.mode_weights) * np.exp(-((r - center) ** 2) / (2 * width**2))
    if mode_filter is not None:
        amp = amp * mode_filter
    phi = np.zeros(basis.dim, dtype=complex)
    for i, m in enumerate(basis.modes):
        occ = np.zeros(basis.n_modes, dtype=np.int16)
        occ[i] = 1
        phi[basis.lookup(occ)] = amp[m]
    return phi / np.linalg.norm(phi)


# ---------------------------------------------------------------- Feshbach transfer

def transfer_check(fb, lambdas, s: float = 1.0, eps: float = 1e-3, tol: float = 1e-8) -> SweepReport:
    """Resolvent reconstruction through F(lambda) against the direct inverse.

    The y-weight is the compression of the joint-basis dGamma(<y>) + 1 to the
    product space (the one-particle Laplacian couples shells across sigma).
    """
    _check_s(s)
    model = fb.model
    split = model.split
    idx = split.joint_index()
    if np.any(idx < 0):
        raise ValueError("product space not contained in the joint basis; lower the factor caps")
    Wj = build_weight("y", s, model.basis)
    Ws = Wj.compress(idx).power(-s)
    H = as_dense(model.H)
    n = H.shape[0]
    rows, summary = [], {}
    worst = 0.0
    for lam in lambdas:
        z = lam + 1j * eps
        try:
            R_dir = la.solve(H - z * np.eye(n), np.eye(n))
            R_rec = fb.reconstruct_inverse(z)
            by = fb.Finv_formula_residual(z)
        except (ValueError, la.LinAlgError) as exc:
            rows.append([float(lam), eps, np.nan, np.nan, np.nan, np.nan, 1])
            summary[f"{lam:.17g}"] = {"error": str(exc)}
            continue
        n_dir = np.linalg.norm(Ws @ R_dir @ Ws, 2)
        n_rec = np.linalg.norm(Ws @ R_rec @ Ws, 2)
        rel = float(np.linalg.norm(Ws @ (R_rec - R_dir) @ Ws, 2) / n_dir)
        worst = max(worst, rel, by)
        rows.append([float(lam), eps, float(n_dir), float(n_rec), rel, float(by), 0])
        summary[f"{lam:.17g}"] = {"rel_residual": rel, "By_residual": by}
    summary["max_residual"] = worst
    summary["passed"] = bool(worst <= tol)
    return SweepReport(["lambda", "eps", "norm_direct", "norm_reconstructed", "rel_residual",
                        "By_residual", "flag"], rows, summary)


def interchange_norm(basis: FockBasis, s: float, Lam_t: float) -> float:
    """||<B>^s Gamma(kappa^{2 Lam_t}) (dGamma(<y>) + 1)^{-s}|| on the photon sectors N >= 1.

    The vacuum contributes exactly 1 (all three factors act trivially), which
    would mask the quantity of interest.
    """
    from .model import smooth_cutoff

    g = basis.grid
    conj = build_dilatation(g)
    B = as_dense(conj.on(basis))
    wb = build_weight("B", s, B=B)
    wy = build_weight("y", s, basis)
    kap = smooth_cutoff(g.omega[basis.modes], 2 * Lam_t)
    G = basis.lift_product(np.diag(kap))
    G = np.diag(G) if G.ndim == 1 else as_dense(G)
    M = wb.power(s) @ G @ wy.power(-s)
    keep = basis.number > 0
    return float(np.linalg.norm(M[np.ix_(keep, keep)], 2))
