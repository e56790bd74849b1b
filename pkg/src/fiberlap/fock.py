"""Truncated bosonic Fock space over a discrete photon mode grid.

Modes are (point, polarization) pairs with the quadrature weight absorbed
into the mode, so that [a_i, a_j*] = delta_ij holds exactly on the grid.
Truncation is by total photon number and optionally by field energy; a*
maps states that would leave the basis to zero.
"""
from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

DEFAULT_MAX_DIM = 200_000

_DIRECTION_SETS = {
    "x": [(1, 0, 0)],
    "pm_x": [(1, 0, 0), (-1, 0, 0)],
    "axes": [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)],
    "tetrahedron": [(1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1)],
    "cube": list(itertools.product((1, -1), repeat=3)),
}


def polarization_frame(k, n_pol: int = 2) -> np.ndarray:
    """Real orthonormal polarization vectors orthogonal to k.

    eps1 = normalize(k x e3), falling back to e1 when k is (nearly) parallel
    to e3; eps2 = normalize(k x eps1). A single-polarization frame returns
    just eps1.
    """
    k = np.asarray(k, dtype=float)
    nk = np.linalg.norm(k)
    c = np.cross(k, [0.0, 0.0, 1.0])
    if np.linalg.norm(c) < 1e-8 * nk:
        e1 = np.array([1.0, 0.0, 0.0])
    else:
        e1 = c / np.linalg.norm(c)
    e2 = np.cross(k, e1)
    e2 /= np.linalg.norm(e2)
    return np.array([e1, e2][:n_pol])


def fibonacci_directions(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    phi = np.pi * (1 + 5**0.5) * i
    r = np.sqrt(1 - z**2)
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def _directions(spec) -> np.ndarray:
    if isinstance(spec, str):
        if spec not in _DIRECTION_SETS:
            raise ValueError(f"unknown direction set {spec!r}")
        d = np.array(_DIRECTION_SETS[spec], dtype=float)
    elif isinstance(spec, (int, np.integer)):
        d = fibonacci_directions(int(spec))
    else:
        d = np.atleast_2d(np.asarray(spec, dtype=float))
    norms = np.linalg.norm(d, axis=1)
    if np.any(norms == 0):
        raise ValueError("zero direction vector")
    return d / norms[:, None]


def _radial_cells(r: np.ndarray) -> np.ndarray:
    """Radial cell widths: centered spacing inside, one-sided at the ends."""
    if len(r) == 1:
        return np.ones(1)
    return np.gradient(r)


@dataclass(frozen=True, eq=False)
class ModeGrid:
    """Photon momentum points with quadrature weights and polarization frames.

    Per-mode arrays (k, omega, eps, mode_point, mode_pol) are laid out point
    major: mode index = point * n_pol + pol.
    """

    points: np.ndarray
    weights: np.ndarray
    frames: np.ndarray  # (n_points, n_pol, 3)
    ray: np.ndarray  # ray id per point (points sharing a direction)
    spec: dict = field(default_factory=dict)

    @property
    def n_points(self) -> int:
        return len(self.points)

    @property
    def n_pol(self) -> int:
        return self.frames.shape[1]

    @property
    def n_modes(self) -> int:
        return self.n_points * self.n_pol

    @property
    def mode_point(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_points), self.n_pol)

    @property
    def mode_pol(self) -> np.ndarray:
        return np.tile(np.arange(self.n_pol), self.n_points)

    @property
    def labels(self) -> list:
        return list(zip(self.mode_point.tolist(), self.mode_pol.tolist()))

    @property
    def k(self) -> np.ndarray:
        return self.points[self.mode_point]

    @property
    def omega(self) -> np.ndarray:
        return np.linalg.norm(self.k, axis=1)

    @property
    def eps(self) -> np.ndarray:
        return self.frames.reshape(-1, 3)

    @property
    def mode_weights(self) -> np.ndarray:
        return self.weights[self.mode_point]

    @property
    def radii(self) -> np.ndarray:
        return np.unique(np.round(np.linalg.norm(self.points, axis=1), 12))

    def rays(self):
        """Point indices of each ray, sorted by radius."""
        r = np.linalg.norm(self.points, axis=1)
        out = []
        for rid in np.unique(self.ray):
            idx = np.flatnonzero(self.ray == rid)
            out.append(idx[np.argsort(r[idx], kind="stable")])
        return out

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.points, self.weights, self.frames):
            h.update(np.ascontiguousarray(arr, dtype=float).tobytes())
        return h.hexdigest()


def build_mode_grid(spec: dict) -> ModeGrid:
    """Build a ModeGrid from a spec dict.

    Either {"radii": [...], "directions": name | int | list, "quadrature":
    "spherical" | "unit", "n_pol": 2} or {"points": [[...]], "weights":
    [...], "n_pol": 2}. Spherical quadrature uses w = r^2 dr dOmega with a
    midpoint radial rule and equal solid-angle cells.
    """
    spec = dict(spec)
    n_pol = int(spec.get("n_pol", 2))
    if n_pol not in (1, 2):
        raise ValueError("n_pol must be 1 or 2")
    if "points" in spec:
        pts = np.atleast_2d(np.asarray(spec["points"], dtype=float))
        w = np.asarray(spec.get("weights", np.ones(len(pts))), dtype=float)
        if w.shape != (len(pts),):
            raise ValueError("weights must match points")
    else:
        radii = np.asarray(spec["radii"], dtype=float)
        if np.any(radii <= 0):
            raise ValueError("grid contains a zero-radius point (k = 0 is excluded)")
        if len(np.unique(radii)) != len(radii):
            raise ValueError("duplicate shell radii")
        radii = np.sort(radii)
        dirs = _directions(spec.get("directions", "axes"))
        rule = spec.get("quadrature", "spherical")
        pts = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, 3)
        if rule == "spherical":
            dr = _radial_cells(radii)
            w = np.repeat(radii**2 * dr * 4 * np.pi / len(dirs), len(dirs))
        elif rule == "unit":
            w = np.ones(len(pts))
        else:
            raise ValueError(f"unknown quadrature rule {rule!r}")
    norms = np.linalg.norm(pts, axis=1)
    if np.any(norms == 0):
        raise ValueError("grid contains a zero-radius point (k = 0 is excluded)")
    if np.any(w <= 0):
        raise ValueError("quadrature weights must be positive")
    keys = [tuple(np.round(p, 12)) for p in pts]
    if len(set(keys)) != len(keys):
        raise ValueError("duplicate mode labels (repeated momentum point)")
    frames = np.array([polarization_frame(p, n_pol) for p in pts])
    # rays: group points by direction
    unit = np.round(pts / norms[:, None], 9)
    _, ray = np.unique(unit, axis=0, return_inverse=True)
    return ModeGrid(pts, w, frames, ray.ravel(), spec)


class FockBasis:
    """Occupation-number basis truncated by photon number and field energy.

    States are graded by total photon number; within a sector the order is
    that of itertools.combinations_with_replacement over the modes, which is
    descending lexicographic in the occupation vectors. The vacuum is state 0.
    """

    def __init__(self, grid: ModeGrid, n_max: int, e_max: Optional[float] = None,
                 max_dim: int = DEFAULT_MAX_DIM, modes: Optional[Sequence[int]] = None):
        if n_max < 0:
            raise ValueError("n_max must be >= 0")
        self.grid = grid
        self.n_max = int(n_max)
        self.e_max = e_max
        self.modes = np.arange(grid.n_modes) if modes is None else np.asarray(modes, int)
        M = len(self.modes)
        omega = grid.omega[self.modes]
        if e_max is None:
            dim = sum(math.comb(M + n - 1, n) for n in range(self.n_max + 1))
            if dim > max_dim:
                raise ValueError(f"basis dimension {dim} exceeds the hard cap max_dim={max_dim}")
        rows = []
        for n in range(self.n_max + 1):
            for combo in itertools.combinations_with_replacement(range(M), n):
                if e_max is not None and omega[list(combo)].sum() > e_max + 1e-12:
                    continue
                rows.append(combo)
                if len(rows) > max_dim:
                    raise ValueError(f"basis dimension exceeds the hard cap max_dim={max_dim}")
        occ = np.zeros((len(rows), M), dtype=np.int16)
        for s, combo in enumerate(rows):
            for j in combo:
                occ[s, j] += 1
        self.states = occ
        self.index = {r.tobytes(): s for s, r in enumerate(occ)}
        self._lowering = None
        self._ladder = {}

    @property
    def dim(self) -> int:
        return len(self.states)

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    @property
    def omega(self) -> np.ndarray:
        return self.grid.omega[self.modes]

    @property
    def k(self) -> np.ndarray:
        return self.grid.k[self.modes]

    @property
    def number(self) -> np.ndarray:
        return self.states.sum(axis=1)

    def lookup(self, occ) -> int:
        """Index of an occupation vector, or -1 if it is not in the basis."""
        return self.index.get(np.asarray(occ, dtype=np.int16).tobytes(), -1)

    def digest(self) -> str:
        h = hashlib.sha256(self.grid.digest().encode())
        h.update(self.modes.astype(np.int64).tobytes())
        h.update(np.ascontiguousarray(self.states).tobytes())
        return h.hexdigest()[:16]

    def lowering_table(self):
        """(src, mode, dst, amp) for every nonzero a_mode |src> = amp |dst>."""
        if self._lowering is None:
            src, mode = np.nonzero(self.states)
            dst = np.empty(len(src), dtype=np.int64)
            for n, (s, j) in enumerate(zip(src, mode)):
                row = self.states[s].copy()
                row[j] -= 1
                dst[n] = self.index[row.tobytes()]
            amp = np.sqrt(self.states[src, mode].astype(float))
            self._lowering = (src, mode, dst, amp)
        return self._lowering

    def annihilator(self, i: int) -> sp.csr_matrix:
        if not 0 <= i < self.n_modes:
            raise IndexError(f"mode {i} out of range")
        if i not in self._ladder:
            src, mode, dst, amp = self.lowering_table()
            m = mode == i
            self._ladder[i] = sp.csr_matrix((amp[m], (dst[m], src[m])), shape=(self.dim,) * 2)
        return self._ladder[i]

    def creator(self, i: int) -> sp.csr_matrix:
        # the transpose of a_i is exactly the projection-truncated a_i*
        return self.annihilator(i).T.tocsr()

    def _smeared(self, h) -> sp.csr_matrix:
        """a(h) = sum_i conj(h_i) a_i."""
        h = np.asarray(h)
        if h.shape != (self.n_modes,):
            raise ValueError(f"smearing function has shape {h.shape}, basis has {self.n_modes} modes")
        src, mode, dst, amp = self.lowering_table()
        vals = np.conj(h)[mode] * amp
        return sp.csr_matrix((vals, (dst, src)), shape=(self.dim,) * 2)

    def a(self, h) -> sp.csr_matrix:
        return self._smeared(h)

    def adag(self, h) -> sp.csr_matrix:
        return self._smeared(h).conj().T.tocsr()

    def field(self, h) -> sp.csr_matrix:
        """Phi(h) = (a*(h) + a(h)) / sqrt(2)."""
        a = self._smeared(h)
        return ((a + a.conj().T) / np.sqrt(2)).tocsr()

    def second_quantize(self, b) -> sp.csr_matrix:
        """dGamma(b) = sum_ij b_ij a_i* a_j on the truncated basis."""
        if sp.issparse(b):
            b = b.toarray()
        b = np.asarray(b)
        if b.shape != (self.n_modes, self.n_modes):
            raise ValueError(f"one-particle operator has shape {b.shape}, expected {self.n_modes}")
        if np.count_nonzero(b - np.diag(np.diag(b))) == 0:
            return sp.diags(self.states @ np.diag(b)).tocsr()
        src, mode, dst, amp = self.lowering_table()
        M = self.n_modes
        # X[(t, j), s] = sqrt(n_j(s)) for s -> t by removing mode j
        X = sp.csr_matrix((amp, (dst * M + mode, src)), shape=(self.dim * M, self.dim))
        bc = sp.csc_matrix(b)
        # Z[(t, i), s] = sum_j b_ij X[(t, j), s]
        counts = np.diff(bc.indptr)[mode]
        rep = np.repeat(np.arange(len(src)), counts)
        offs = np.concatenate([np.arange(bc.indptr[j], bc.indptr[j + 1]) for j in mode]) \
            if len(mode) else np.zeros(0, int)
        rows = dst[rep] * M + bc.indices[offs]
        Z = sp.csr_matrix((bc.data[offs] * amp[rep], (rows, src[rep])), shape=X.shape)
        return (X.T @ Z).tocsr()

    def lift_product(self, a) -> np.ndarray:
        """Gamma(a): the multiplicative lift a x ... x a on each sector."""
        a = np.asarray(a.toarray() if sp.issparse(a) else a)
        if a.shape != (self.n_modes, self.n_modes):
            raise ValueError(f"one-particle operator has shape {a.shape}, expected {self.n_modes}")
        occ = self.states.astype(int)
        if np.count_nonzero(a - np.diag(np.diag(a))) == 0:
            c = np.diag(a)
            return np.diag(np.prod(np.where(occ > 0, c[None, :] ** occ, 1), axis=1))
        G = np.zeros((self.dim, self.dim), dtype=np.result_type(a, float))
        lists = [np.repeat(np.arange(self.n_modes), row) for row in occ]
        norm = np.array([np.prod([math.factorial(n) for n in row]) for row in occ], float)
        num = self.number
        for n in range(self.n_max + 1):
            sector = np.flatnonzero(num == n)
            for m in sector:
                for s in sector:
                    sub = a[np.ix_(lists[m], lists[s])]
                    G[m, s] = _permanent(sub) / np.sqrt(norm[m] * norm[s])
        return G


def _permanent(m: np.ndarray):
    n = m.shape[0]
    if n == 0:
        return 1.0
    return sum(np.prod(m[np.arange(n), p]) for p in itertools.permutations(range(n)))


def enumerate_basis(grid: ModeGrid, n_max: int, e_max: Optional[float] = None,
                    max_dim: int = DEFAULT_MAX_DIM) -> FockBasis:
    return FockBasis(grid, n_max, e_max, max_dim)


class TensorSplit:
    """F = F_sigma (modes with |k| >= sigma) x F^sigma (modes with |k| < sigma).

    Product-space index is high * dim_low + low, matching np.kron(A_high, B_low).
    Factor caps default to the joint cap, so the product space contains every
    joint state plus the states whose combined number exceeds the joint cap.
    """

    def __init__(self, basis: FockBasis, sigma: float, n_high: Optional[int] = None,
                 n_low: Optional[int] = None):
        omega = basis.omega
        high = np.flatnonzero(omega >= sigma)
        low = np.flatnonzero(omega < sigma)
        if len(high) == 0 or len(low) == 0:
            raise ValueError(f"degenerate split at sigma={sigma}: empty factor")
        self.basis = basis
        self.sigma = sigma
        self.high_modes = basis.modes[high]
        self.low_modes = basis.modes[low]
        nh = basis.n_max if n_high is None else n_high
        nl = basis.n_max if n_low is None else n_low
        self.high = FockBasis(basis.grid, nh, basis.e_max, modes=self.high_modes)
        self.low = FockBasis(basis.grid, nl, basis.e_max, modes=self.low_modes)
        self._high_pos = high
        self._low_pos = low

    @property
    def dim(self) -> int:
        return self.high.dim * self.low.dim

    def lift_high(self, A):
        return sp.kron(A, sp.identity(self.low.dim), format="csr")

    def lift_low(self, B):
        return sp.kron(sp.identity(self.high.dim), B, format="csr")

    def product_states(self) -> np.ndarray:
        """Joint occupation vectors of all product states."""
        occ = np.zeros((self.dim, self.basis.n_modes), dtype=np.int16)
        hi = np.repeat(self.high.states, self.low.dim, axis=0)
        lo = np.tile(self.low.states, (self.high.dim, 1))
        occ[:, self._high_pos] = hi
        occ[:, self._low_pos] = lo
        return occ

    def joint_index(self) -> np.ndarray:
        """Joint-basis index of each product state, -1 where it has no image."""
        return np.array([self.basis.lookup(r) for r in self.product_states()], dtype=np.int64)

    def to_joint(self, v: np.ndarray) -> np.ndarray:
        idx = self.joint_index()
        out = np.zeros(self.basis.dim, dtype=v.dtype)
        m = idx >= 0
        out[idx[m]] = v[m]
        return out

    def from_joint(self, v: np.ndarray) -> np.ndarray:
        idx = self.joint_index()
        out = np.zeros(self.dim, dtype=v.dtype)
        m = idx >= 0
        out[m] = v[idx[m]]
        return out

    def digest(self) -> str:
        h = hashlib.sha256((self.high.digest() + self.low.digest()).encode())
        return h.hexdigest()[:16]


def tensor_split(basis: FockBasis, sigma: float, n_high: Optional[int] = None,
                 n_low: Optional[int] = None) -> TensorSplit:
    return TensorSplit(basis, sigma, n_high, n_low)
