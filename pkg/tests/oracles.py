"""Independent brute-force oracles, written without the package internals."""
import itertools

import numpy as np


def occupation_states(n_modes, n_max, energies=None, e_max=None):
    """All occupation vectors with total <= n_max (and field energy <= e_max), any order."""
    out = []
    for occ in itertools.product(range(n_max + 1), repeat=n_modes):
        if sum(occ) > n_max:
            continue
        if e_max is not None and np.dot(occ, energies) > e_max + 1e-12:
            continue
        out.append(occ)
    return out


def dense_ladders(states):
    """a_i as dense matrices on the given list of occupation tuples."""
    pos = {s: i for i, s in enumerate(states)}
    M = len(states[0])
    ops = []
    for i in range(M):
        a = np.zeros((len(states), len(states)))
        for col, s in enumerate(states):
            if s[i] == 0:
                continue
            t = list(s)
            t[i] -= 1
            a[pos[tuple(t)], col] = np.sqrt(s[i])
        ops.append(a)
    return ops


def dgamma(b, ladders):
    """sum_ij b_ij a_i* a_j."""
    n = ladders[0].shape[0]
    out = np.zeros((n, n), dtype=np.result_type(b, float))
    for i, j in itertools.product(range(len(ladders)), repeat=2):
        out += b[i, j] * ladders[i].T @ ladders[j]
    return out


def permutation_matrix(states_from, states_to):
    """P with P[i, j] = 1 when states_to[i] == states_from[j]."""
    pos = {s: j for j, s in enumerate(states_from)}
    P = np.zeros((len(states_to), len(states_from)))
    for i, s in enumerate(states_to):
        P[i, pos[s]] = 1
    return P


def schur_complement(H, keep):
    """H_kk - H_kd H_dd^{-1} H_dk for an index list keep."""
    drop = [i for i in range(H.shape[0]) if i not in keep]
    A = H[np.ix_(keep, keep)]
    if not drop:
        return A
    return A - H[np.ix_(keep, drop)] @ np.linalg.solve(H[np.ix_(drop, drop)], H[np.ix_(drop, keep)])


def nelson_single_mode(e, omega, g, coupling, n_max):
    """H_el x 1 + 1 x omega N + g coupling (a + a*)/sqrt(2) on C^2 x C^{n_max+1}."""
    n = np.arange(n_max + 1)
    a = np.diag(np.sqrt(n[1:]), 1)
    H = np.kron(np.diag(e), np.eye(n_max + 1)) + np.kron(np.eye(len(e)), omega * np.diag(n))
    H = H + g * coupling * np.kron(np.eye(len(e)), (a + a.T) / np.sqrt(2))
    return H
