import numpy as np
import pytest

from fiberlap.feshbach import FiberFeshbach, J_lower
from fiberlap.fock import build_mode_grid, enumerate_basis
from fiberlap.model import assemble_fiber
from fiberlap.mourre import (FLambda, MourreReport, build_dilatation, bump_f_sigma, commutator,
                             fiber_commutator_form, identity_residuals, lemma_quantities,
                             mourre_positivity, radial_stencil, mourre_fiber)


def geo_grid(n, directions="x"):
    return build_mode_grid({"radii": list(np.geomspace(0.05, 1.2, n)), "directions": directions})


def test_single_shell_rejected():
    with pytest.raises(ValueError, match="2 radial shells"):
        radial_stencil(build_mode_grid({"radii": [0.5], "directions": "axes"}))


def test_generator_hermitian_and_kills_vacuum():
    g = geo_grid(6, "pm_x")
    cj = build_dilatation(g)
    assert np.abs(cj.b - cj.b.conj().T).max() == 0
    B = cj.on(enumerate_basis(g, 2)).toarray()
    assert np.abs(B - B.conj().T).max() < 1e-14
    assert np.abs(B[:, 0]).max() == 0


def test_commutator_properties():
    g = geo_grid(5)
    m = assemble_fiber([0.02, 0, 0], 1e-3, g, 2.0, n_max=2)
    B = build_dilatation(g).on(m.basis)
    C = commutator(m.H, B).toarray()
    assert np.abs(C - C.conj().T).max() < 1e-10
    assert abs(commutator(m.H, m.H)).max() == 0
    # every identity vanishes on the vacuum
    assert np.abs(commutator(m.H_f, B).toarray()[:, 0]).max() == 0


def test_identity_residuals_refine():
    res = [identity_residuals(geo_grid(n), 2.0) for n in (8, 16, 32)]
    assert res[0]["H_f"] / res[1]["H_f"] >= 2
    assert res[0]["Phi_h"] / res[1]["Phi_h"] >= 1.8
    for key in ("H_f", "P_f", "Phi_h"):
        vals = [r[key] for r in res]
        assert all(b <= 1.1 * a for a, b in zip(vals, vals[1:]))


def test_sigma_identity_refines():
    vals = [identity_residuals(geo_grid(n), 2.0, sigma=0.3)["H_f_sigma"] for n in (16, 32, 64)]
    assert vals[0] > vals[1] > vals[2]


def test_one_photon_commutator_form():
    # alpha = 0: <k|C|k> = -(P - k).k + |k|, exact on every grid
    g = geo_grid(6, "pm_x")
    P = np.array([0.02, 0, 0])
    m = assemble_fiber(P, 0.0, g, 2.0, n_max=1)
    C = fiber_commutator_form(m, build_dilatation(g)).toarray()
    for i in range(g.n_modes):
        occ = np.zeros(g.n_modes, dtype=np.int16)
        occ[i] = 1
        s = m.basis.lookup(occ)
        k = g.k[i]
        assert abs(C[s, s] - (-(P - k) @ k + np.linalg.norm(k))) < 1e-14


def test_mourre_fiber_free_matches_per_state_oracle():
    g = build_mode_grid({"radii": list(np.linspace(0.05, 1.0, 16)), "directions": "pm_x"})
    m = assemble_fiber([0, 0, 0], 0.0, g, 2.0, n_max=2)
    rep = mourre_fiber(m, sigma=0.5)
    # C and H are both diagonal in occupation states at alpha = 0
    occ = m.basis.states.astype(float)
    mom = occ @ g.k
    energy = 0.5 * np.sum(mom**2, axis=1) + occ @ g.omega
    cval = np.sum(mom**2, axis=1) + occ @ g.omega
    sel = (energy >= rep.J[0]) & (energy <= rep.J[1])
    assert rep.rank == sel.sum()
    assert abs(rep.min_eig - cval[sel].min()) < 1e-12
    assert rep.margin >= 0 and rep.target == 0.5 * 0.5 / 2
    assert rep.extra["form_margin"] >= -1e-10
    # raw matrix commutator has zero trace on eigenvectors (virial)
    assert abs(rep.extra["raw_trace"]) < 1e-8


def test_vacuous_report():
    rep = mourre_positivity(np.diag([0.0, 1.0]), np.eye(2), (0.3, 0.6), 0.1)
    assert isinstance(rep, MourreReport) and rep.vacuous and rep.rank == 0


def test_bump_values():
    sigma, rho = 0.2, 0.7
    f = bump_f_sigma(sigma, rho)
    rs = rho * sigma
    assert f(rs / 16) == 1 and f(rs / 8) == 1
    assert f(rs / 4) == 0 and f(3 * rs / 64) == 0 and f(9 * rs / 64) == 0
    assert abs(f(3.5 * rs / 64) - 0.5) < 1e-15 and abs(f(8.5 * rs / 64) - 0.5) < 1e-15


@pytest.fixture(scope="module")
def fb_pair():
    g = build_mode_grid({"radii": [0.03, 0.06, 0.12, 0.24, 0.48, 0.96], "directions": "tetrahedron"})
    return [FiberFeshbach(assemble_fiber([0.02, 0, 0], a, g, 1.0, 0.2, n_max=2, n_high=1, n_low=1))
            for a in (0.0, 1e-4)]


def test_lemma_quantities_vanish_at_zero_coupling(fb_pair):
    fb = fb_pair[0]
    lam = fb.E_sigma + 12 / 128 * fb.rho * fb.sigma
    q = lemma_quantities(fb, lam)
    for key in ("W1", "W2", "comm_W1", "comm_W2", "f_diff"):
        assert q[key] == 0
    assert q["L5.9"] == 0 and q["L5.7"] <= 1e-9


def test_flambda_commutator_hermitian(fb_pair):
    fb = fb_pair[1]
    lam = J_lower(fb.E_sigma, fb.rho, fb.sigma, 3)[1]
    fl = FLambda(fb, lam)
    assert np.abs(fl.C - fl.C.conj().T).max() < 1e-10
    assert np.abs(fl.F - fl.F.conj().T).max() < 1e-10
