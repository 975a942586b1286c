import math

import numpy as np
import pytest
from scipy.optimize import brentq

from resonance_lab import (BranchAmbiguityError, Channel, ChannelKind,
                           InvalidInputError, SystemModel, build_h_eff,
                           diagonalize, find_exceptional_points,
                           solve_fixed_point, sweep)
from resonance_lab.testing import bundled_model


def test_hermitian_limit():
    spec = diagonalize(np.diag([1.0, 2.0]).astype(complex))
    assert np.array_equal(spec.eigenvalues, np.array([1.0 + 0j, 2.0 + 0j]))
    assert np.array_equal(spec.a_diag, np.array([1.0, 1.0]))
    assert np.array_equal(spec.phase_rigidity, np.array([1.0, 1.0]))
    off = spec.b_matrix - np.diag(np.diag(spec.b_matrix))
    assert np.all(off == 0.0)
    assert not spec.defective


def test_rank_one_antihermitian_2x2():
    spec = diagonalize(-1j * np.ones((2, 2)))
    assert np.allclose(np.sort(spec.eigenvalues.imag), [-2.0, 0.0], atol=1e-14)
    assert np.allclose(spec.eigenvalues.real, 0.0, atol=1e-14)
    # eigenvectors are the real symmetric/antisymmetric combinations
    v = np.abs(spec.right_eigenvectors)
    assert np.allclose(v, np.full((2, 2), 1 / math.sqrt(2)), atol=1e-12)
    assert np.allclose(spec.a_diag, 1.0, atol=1e-12)
    assert np.allclose(spec.phase_rigidity, 1.0, atol=1e-12)


def test_exact_exceptional_point_is_defective():
    # discriminant (e1-e2)^2/4 + c^2 = -1 + 1 = 0: a genuine Jordan block
    spec = diagonalize(np.array([[0.0, 1.0], [1.0, -2j]]))
    assert spec.defective
    assert np.allclose(spec.eigenvalues, -1j, atol=1e-6)
    assert np.all(np.isinf(spec.a_diag))
    assert np.all(spec.phase_rigidity < 1e-3)


def test_sign_convention_is_deterministic_and_canonical():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(5, 5))
    h = (a + a.T) - 1j * np.eye(5) * rng.uniform(0.1, 1, 5)
    h = (h + h.T) / 2
    s1 = diagonalize(h)
    s2 = diagonalize(h.copy())
    assert np.array_equal(s1.right_eigenvectors, s2.right_eigenvectors)
    for k in range(5):
        v = s1.right_eigenvectors[:, k]
        lead = v[np.argmax(np.abs(v))]
        assert lead.real > 0 or (lead.real == 0 and lead.imag > 0)
        assert complex(np.sum(v * v)) == pytest.approx(1.0, abs=1e-12)


def _random_complex_symmetric(rng, n, c, scale):
    diag = np.sort(rng.uniform(-1, 1, n))
    hb = np.diag(diag)
    v = rng.normal(size=(n, max(c, 1))) * math.sqrt(scale)
    return hb - 1j * math.pi * (v @ v.T), v


def test_biorthogonality_invariants_random():
    rng = np.random.default_rng(42)
    for _ in range(60):
        n = int(rng.integers(1, 9))
        c = int(rng.integers(1, 4))
        scale = 10.0 ** rng.uniform(-3, -0.7)
        h, _ = _random_complex_symmetric(rng, n, c, scale)
        spec = diagonalize(h)
        if spec.defective:
            continue
        phi = spec.right_eigenvectors
        assert np.max(np.abs(phi.T @ phi - np.eye(n))) <= 1e-10
        assert np.min(spec.a_diag) >= 1.0 - 1e-12
        assert np.all(spec.phase_rigidity > 0)
        assert np.all(spec.phase_rigidity <= 1 + 1e-12)
        assert np.max(spec.eigenvalues.imag) <= 1e-12
        # Gram matrix structure: Hermitian and G conj(G) = I (the exact
        # identity behind the pairwise antisymmetry of its off-diagonal part)
        g = spec.b_matrix
        assert np.max(np.abs(g - g.conj().T)) <= 1e-10
        assert np.max(np.abs(g @ g.conj() - np.eye(n))) <= 1e-10
        off = g - np.diag(np.diag(g))
        defect = np.max(np.abs(off + off.T)) if n > 1 else 0.0
        if n == 2:
            assert defect <= 1e-10   # exact for a two-state spectrum
        elif n > 2:
            bmax = np.max(np.abs(off))
            assert defect <= (n - 2) * bmax ** 2 + 1e-10


def test_antisymmetry_defect_is_second_order_not_zero():
    # For three or more mixed states the Gram antisymmetry holds only to
    # second order in |B|; pin a concrete overlapping case demonstrating it.
    rng = np.random.default_rng(7)
    h, _ = _random_complex_symmetric(rng, 3, 1, 0.09)
    spec = diagonalize(h)
    off = spec.b_matrix - np.diag(np.diag(spec.b_matrix))
    defect = np.max(np.abs(off + off.T))
    bmax = np.max(np.abs(off))
    assert defect > 1e-8            # genuinely nonzero...
    assert defect <= bmax ** 2      # ...but bounded by the second-order scale


def test_eigendecomposition_residual_and_completeness():
    rng = np.random.default_rng(9)
    for _ in range(20):
        h, _ = _random_complex_symmetric(rng, 6, 2, 0.05)
        spec = diagonalize(h)
        if spec.defective:
            continue
        phi, z = spec.right_eigenvectors, spec.eigenvalues
        resid = np.linalg.norm(h @ phi - phi * z[None, :])
        assert resid <= 1e-10 * np.linalg.norm(h)
        assert np.max(np.abs(phi @ phi.T - np.eye(6))) <= 1e-8


def wideband_model(hb, gamma, dos):
    return SystemModel(levels_hb=hb, channels=(Channel(kind=ChannelKind.WIDEBAND,
                                                       dos_scale=dos),),
                       couplings=gamma)


def test_fixed_point_converges_in_one_step_for_wideband():
    m = wideband_model(np.diag([-0.3, 0.4]), np.array([[0.2], [0.1]]), 0.3)
    spec = diagonalize(build_h_eff(m, 0.0))
    for z in spec.eigenvalues:
        st = solve_fixed_point(m, complex(z))
        assert st.converged
        assert st.iterations == 1
        assert st.e_lambda == pytest.approx(float(z.real), abs=1e-14)


def flatband1(e0, dos_g2, lo=1.0, hi=3.0):
    return SystemModel(levels_hb=np.array([[e0]]),
                       channels=(Channel(kind=ChannelKind.FLATBAND, threshold=lo,
                                         band_top=hi, dos_scale=dos_g2),),
                       couplings=np.array([[1.0]]))


def test_fixed_point_flatband_vs_scalar_root():
    m = flatband1(2.5, 0.05)
    root = brentq(lambda e: e - 2.5 - 0.05 * math.log(abs((e - 1) / (e - 3))),
                  1.5, 2.9999, xtol=1e-14)
    st = solve_fixed_point(m, complex(2.5), 1e-12)
    assert st.converged
    assert st.e_lambda == pytest.approx(root, abs=1e-9)
    assert st.gamma_lambda == pytest.approx(2 * math.pi * 0.05, rel=1e-12)
    # self-consistency residual
    z = diagonalize(build_h_eff(m, st.e_lambda)).eigenvalues[0]
    assert abs(st.e_lambda - z.real) <= 1e-12


def test_fixed_point_below_threshold_is_exactly_bound():
    m = flatband1(0.5, 0.05)
    root = brentq(lambda e: e - 0.5 - 0.05 * math.log(abs((e - 1) / (e - 3))),
                  -1.0, 0.99, xtol=1e-14)
    st = solve_fixed_point(m, complex(0.5), 1e-12)
    assert st.gamma_lambda == 0.0
    assert st.e_lambda == pytest.approx(root, abs=1e-9)
    assert st.e_lambda < 0.5       # pushed down by the band above
    assert st.lifetime == math.inf


def test_fixed_point_iteration_cap_returns_unconverged():
    m = flatband1(2.5, 0.05)
    st = solve_fixed_point(m, complex(2.5), 1e-12, max_iter=3)
    assert not st.converged
    assert st.iterations == 3


def test_ambiguous_eigenvalue_seed_raises():
    m = wideband_model(np.zeros((2, 2)), np.zeros((2, 1)), 0.3)
    with pytest.raises(BranchAmbiguityError):
        solve_fixed_point(m, 0.0 + 0j)


def trapping_closed_form(g_values, d=0.25):
    """Eigenvalue pair of diag(-d, d) - i g^2 * ones for dos = 1/pi."""
    out = []
    for g in np.atleast_1d(g_values):
        kap = g * g
        disc = complex(d * d - kap * kap)
        s = np.sqrt(disc)
        out.append((-1j * kap + s, -1j * kap - s))
    return np.array(out)


GRID = np.linspace(0.01, 2.0, 160)     # avoids the EP at 0.5 by > 1e-3


def test_trapping_sweep_matches_closed_form():
    sw = sweep(bundled_model("trapping2"), "g", GRID)
    assert np.all(sw.converged)
    closed = trapping_closed_form(GRID)
    for i in range(GRID.size):
        got = np.sort_complex(np.round(sw.eigenvalues[i], 12))
        want = np.sort_complex(np.round(closed[i], 12))
        pair_err = min(np.max(np.abs(np.sort_complex(sw.eigenvalues[i]) - w))
                       for w in (np.sort_complex(closed[i]),
                                 np.sort_complex(closed[i])[::-1]))
        assert pair_err <= 1e-10, (GRID[i], got, want)
    # trapping shape: one width grows with g^2, the other falls post-EP
    wide = sw.gamma_lambda.max(axis=1)
    narrow = sw.gamma_lambda.min(axis=1)
    assert wide[-1] > 10 * wide[GRID.size // 2]
    post = GRID > 0.6
    assert np.all(np.diff(narrow[post]) < 0)
    # width sum rule along the sweep (trace identity), relative 1e-9
    total = sw.gamma_lambda.sum(axis=1)
    expected = 4 * GRID ** 2
    assert np.max(np.abs(total - expected) / expected) <= 1e-9


def test_zero_coupling_sweep_is_constant():
    hb = np.diag([-0.4, 0.7])
    m = SystemModel(levels_hb=hb, channels=(Channel(kind=ChannelKind.WIDEBAND,
                                                    dos_scale=0.2),),
                    couplings=np.zeros((2, 1)), control_params={"g": 0.0},
                    coupling_refs={})
    sw = sweep(m, "g", np.linspace(0.0, 1.0, 5))
    assert np.all(sw.gamma_lambda == 0.0)
    assert np.allclose(sw.e_lambda, np.array([-0.4, 0.7])[None, :], atol=1e-14)


def test_branch_continuity_overlaps():
    sw = sweep(bundled_model("trapping2"), "g", np.linspace(0.01, 0.4, 40))
    for i in range(1, 40):
        for b in range(2):
            ov = abs(sw.eigvecs[i - 1, b] @ sw.eigvecs[i, b])
            assert ov >= 0.5


def test_exceptional_point_location_and_rigidity_collapse():
    sw = sweep(bundled_model("trapping2"), "g", GRID)
    eps = find_exceptional_points(sw)
    assert len(eps) == 1
    ep = eps[0]
    assert ep.param_value == pytest.approx(0.5, abs=1e-6)
    assert ep.branch_pair == (0, 1)
    assert ep.min_separation < 1e-3
    assert ep.min_rigidity < 1e-2
    assert ep.energy_value.imag == pytest.approx(-0.25, abs=1e-6)
    # coalescing pair approaches phi ~ +-i phi' (small ray deviation)
    assert ep.coalescence_defect < 1e-2
    # grid-level minimum rigidity improves under the refinement
    assert ep.min_rigidity < np.min(sw.rigidity)


def test_hermitian_crossing_is_not_flagged():
    # real level crossing of a closed system: rigidity stays 1
    hb = np.diag([0.0, 0.0])
    m = SystemModel(levels_hb=hb, channels=(Channel(kind=ChannelKind.WIDEBAND,
                                                    dos_scale=0.2),),
                    couplings=np.zeros((2, 1)),
                    control_params={"e2": -0.5},
                    hb_refs={(1, 1): __import__("resonance_lab").ParamRef("e2")})
    sw = sweep(m, "e2", np.linspace(-0.5, 0.5, 21))
    assert np.all(sw.rigidity == 1.0)
    assert find_exceptional_points(sw) == []


def test_trapping_asymptotics_rank_one_limit():
    hb = np.diag([-1.0, -0.3, 0.4, 1.1])
    gam = np.array([[1.0], [0.8], [-0.6], [1.2]])
    dos = 0.1
    g = 1e3
    m = SystemModel(levels_hb=hb, channels=(Channel(kind=ChannelKind.WIDEBAND,
                                                    dos_scale=dos),),
                    couplings=gam * g)
    spec = diagonalize(build_h_eff(m, 0.0))
    widths = np.sort(spec.widths)
    big_expected = 2 * math.pi * dos * g * g * float(np.sum(gam ** 2))
    assert widths[-1] == pytest.approx(big_expected, rel=1e-9)
    assert np.all(widths[:-1] < 1e-5)
    # trapped states converge to H_B restricted to the coupling's complement
    w = (gam / np.linalg.norm(gam)).ravel()
    basis = np.linalg.qr(np.eye(4) - np.outer(w, w))[0][:, :3]
    restricted = np.sort(np.linalg.eigvalsh(basis.T @ hb @ basis))
    trapped = np.sort(spec.eigenvalues.real[np.argsort(spec.widths)[:-1]])
    assert np.allclose(trapped, restricted, atol=1e-4)


def test_repulsion_vs_width_bifurcation_dichotomy():
    model = bundled_model("trapping2")
    d = 0.25

    def pair(g):
        spec = diagonalize(build_h_eff(model.with_params(g=g), 0.0))
        z = spec.eigenvalues
        return abs(z[0].real - z[1].real), abs(z[0].imag - z[1].imag) * 2

    g_ep = math.sqrt(d)
    below = [pair(g) for g in (0.40, 0.44, 0.48)]
    above = [pair(g) for g in (0.52, 0.56, 0.60)]
    # below the EP: energies repel (separation shrinks toward the EP),
    # widths stay equal; above: energies attract to equality, widths bifurcate
    de_below = [b[0] for b in below]
    dg_below = [b[1] for b in below]
    assert de_below[0] > de_below[1] > de_below[2] > 0
    assert max(dg_below) < 1e-12
    de_above = [a[0] for a in above]
    dg_above = [a[1] for a in above]
    assert max(de_above) < 1e-12
    assert dg_above[0] < dg_above[1] < dg_above[2]


def test_sweep_validation():
    m = bundled_model("trapping2")
    with pytest.raises(InvalidInputError):
        sweep(m, "nope", np.linspace(0, 1, 5))
    with pytest.raises(InvalidInputError):
        sweep(m, "g", [0.1])
    with pytest.raises(InvalidInputError):
        sweep(m, "g", [0.1, 0.3, 0.2])
    with pytest.raises(InvalidInputError):
        find_exceptional_points(sweep(m, "g", [0.1, 0.2]), 1e-3, 1e-2)
