import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fiberlap.fock import build_mode_grid, enumerate_basis
from fiberlap.model import (assemble_fiber, assemble_nelson, build_coupling, expanded_hamiltonian,
                            free_dispersion, glue, smooth_cutoff, snap_sigma)
from oracles import nelson_single_mode, occupation_states


@pytest.mark.parametrize("Lam", [0.5, 1.0, 3.0])
def test_cutoff_values(Lam):
    assert smooth_cutoff(Lam / 2, Lam) == 1.0
    assert smooth_cutoff(2 * Lam, Lam) == 0.0
    assert abs(smooth_cutoff(7 * Lam / 8, Lam) - 0.5) < 1e-15


def test_cutoff_rejects_nonpositive_radius():
    with pytest.raises(ValueError):
        smooth_cutoff(0.1, 0.0)


@given(st.floats(-2, 3))
def test_glue_symmetry(x):
    assert abs(glue(x) + glue(1 - x) - 1) < 1e-14


def test_unit_coupling():
    g = build_mode_grid({"points": [[1, 0, 0]], "weights": [1.0], "n_pol": 1})
    cp = build_coupling(g, 10.0)
    assert abs(np.linalg.norm(cp.h[0]) - 1) < 1e-15


def test_coupling_split_limits():
    g = build_mode_grid({"radii": [0.1, 0.5, 0.9], "directions": "axes"})
    cp = build_coupling(g, 1.0, 0.0)
    assert np.array_equal(cp.h_sigma, cp.h) and not cp.h_low.any()
    cp = build_coupling(g, 1.0, 2.0)
    assert not cp.h_sigma.any() and np.array_equal(cp.h_low, cp.h)


def test_free_fiber_is_diagonal_dispersion():
    g = build_mode_grid({"radii": [0.2, 0.7], "directions": "axes"})
    P = np.array([0.4, -0.1, 0.2])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        m = assemble_fiber(P, 0.0, g, 1.0, n_max=2)
    H = m.H.toarray()
    assert np.abs(H - np.diag(np.diag(H))).max() == 0
    # oracle: direct loop over occupations
    want = []
    for occ in m.basis.states:
        mom = sum(n * k for n, k in zip(occ, g.k))
        want.append(0.5 * np.sum((P - mom) ** 2) + occ @ g.omega)
    assert np.allclose(np.diag(H), want, atol=1e-14)
    assert np.allclose(free_dispersion(m.basis, P), want, atol=1e-14)


def test_free_decomposition_pieces():
    g = build_mode_grid({"radii": [0.1, 0.3], "directions": "pm_x"})
    m = assemble_fiber([0.02, 0, 0], 0.0, g, 1.0, 0.2, n_max=2)
    assert abs(m.U_sigma).max() == 0
    assert np.allclose(m.grad_E, [0.02, 0, 0])
    assert abs(m.E_sigma - 0.5 * 0.02**2) < 1e-15


def test_assembly_residuals_small_model():
    g = build_mode_grid({"radii": [0.1, 0.3], "directions": "tetrahedron"})
    m = assemble_fiber([0.02, 0, 0], 1e-4, g, 1.0, 0.2, n_max=2)
    assert abs(m.H - m.H_sigma - m.U_sigma).max() <= 1e-10
    assert abs(m.H - m.T_sigma - m.W_sigma).max() <= 1e-10


def test_expanded_form_matches():
    g = build_mode_grid({"radii": [0.2, 0.6], "directions": "tetrahedron"})
    m = assemble_fiber([0.01, 0.005, 0], 1e-2, g, 1.0, n_max=2)
    assert abs(m.H - expanded_hamiltonian(m)).max() < 1e-12


def test_sigma_zero_equals_full_hamiltonian():
    g = build_mode_grid({"radii": [0.1, 0.4], "directions": "x"})
    m = assemble_fiber([0.01, 0, 0], 1e-3, g, 1.0, 0.0, n_max=2)
    assert m.split is None and abs(m.H - m.H_sigma).max() == 0


def test_negative_alpha_rejected():
    g = build_mode_grid({"radii": [0.1, 0.4], "directions": "x"})
    with pytest.raises(ValueError):
        assemble_fiber([0, 0, 0], -1.0, g, 1.0)


def test_snap_sigma():
    g = build_mode_grid({"radii": [0.1, 0.2, 0.4], "directions": "x"})
    assert snap_sigma(g, 0.3) == (0.3, False)
    with pytest.warns(UserWarning, match="snapped"):
        s, snapped = snap_sigma(g, 0.2)
    assert snapped and s == pytest.approx(0.15)
    with pytest.raises(ValueError):
        snap_sigma(g, 0.05)


def test_nelson_g0_exact():
    g = build_mode_grid({"radii": [0.3, 0.8], "directions": "x"})
    b = enumerate_basis(g, 2)
    H_el = np.array([[0.0, 0.3], [0.3, 1.0]])
    nm = assemble_nelson(H_el, 0.0, 0.0, 1.0, b)
    assert nm.ground_energy() == pytest.approx(np.linalg.eigvalsh(H_el)[0], abs=1e-15)
    # diagonal H_el: both sides are the same float
    assert assemble_nelson(np.diag([-0.3, 1.0]), 0.0, 0.0, 1.0, b).ground_energy() == -0.3


@pytest.mark.parametrize("n_max", [2, 4])
def test_nelson_single_mode_oracle(n_max):
    grid = build_mode_grid({"points": [[1, 0, 0]], "weights": [1.0], "n_pol": 1})
    b = enumerate_basis(grid, n_max)
    nm = assemble_nelson(np.diag([0.0, 1.0]), 0.1, 0.5, 10.0, b)
    # mu = 1/2: form factor is kappa(1) = 1, no infrared power
    want = np.linalg.eigvalsh(nelson_single_mode([0.0, 1.0], 1.0, 0.1, 1.0, n_max))[0]
    assert abs(nm.ground_energy() - want) < 1e-12
    assert nm.H.shape[0] == 2 * (n_max + 1) == 2 * len(occupation_states(1, n_max))


def test_nelson_rejects_bad_input():
    grid = build_mode_grid({"points": [[1, 0, 0]], "n_pol": 1})
    b = enumerate_basis(grid, 1)
    with pytest.raises(ValueError):
        assemble_nelson(np.array([[0.0, 1.0], [0.0, 1.0]]), 0.1, 0.0, 1.0, b)
    with pytest.raises(ValueError):
        assemble_nelson(np.diag([0.0, 1.0]), 0.1, -0.1, 1.0, b)
