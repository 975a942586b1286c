import math

import numpy as np
import pytest
from scipy.integrate import quad

from resonance_lab import (Channel, ChannelKind, InvalidInputError,
                           SingularSelfEnergyError, SystemModel, build_h_eff,
                           coupling_vector, diagonalize, expected_width_sum,
                           is_channel_open, open_channel_mask)
from resonance_lab.testing import random_model


def wideband(dos):
    return Channel(kind=ChannelKind.WIDEBAND, dos_scale=dos)


def test_zero_coupling_reduces_to_hb():
    m = SystemModel(levels_hb=np.array([[0.7]]), channels=(wideband(0.3),),
                    couplings=np.array([[0.0]]))
    h = build_h_eff(m, 0.123)
    assert np.array_equal(h.matrix, np.array([[0.7 + 0j]]))
    assert np.all(h.antihermitian_part == 0.0)


def test_wideband_two_level_closed_form():
    # dos = 1/pi and unit couplings make H_eff = -i * ones(2, 2).
    m = SystemModel(levels_hb=np.zeros((2, 2)), channels=(wideband(1 / math.pi),),
                    couplings=np.array([[1.0], [1.0]]))
    h = build_h_eff(m, 0.0)
    assert np.allclose(h.matrix, -1j * np.ones((2, 2)), atol=1e-15)
    assert np.all(h.open_channel_mask)


def flatband_model(dos_g2, lo=1.0, hi=3.0, e0=0.0):
    return SystemModel(levels_hb=np.array([[e0]]),
                       channels=(Channel(kind=ChannelKind.FLATBAND, threshold=lo,
                                         band_top=hi, dos_scale=dos_g2),),
                       couplings=np.array([[1.0]]))


def test_flatband_below_threshold_shift_vs_quadrature():
    # E below the band: no residue, and the PV integral is an ordinary one.
    m = flatband_model(0.1)
    h = build_h_eff(m, 0.0)
    assert np.all(h.antihermitian_part == 0.0)
    oracle, err = quad(lambda w: 0.1 / (0.0 - w), 1.0, 3.0)
    assert err < 1e-12
    assert h.hermitian_part[0, 0] == pytest.approx(oracle, abs=1e-12)
    # the band above the level pushes it down
    assert h.hermitian_part[0, 0] < 0.0


def test_flatband_in_band_pv_vs_cauchy_quadrature():
    m = flatband_model(0.07)
    for e in (1.3, 2.0, 2.9):
        h = build_h_eff(m, e)
        # quad's cauchy weight is 1/(w - e); our integrand is 1/(e - w)
        pv = -quad(lambda w: 0.07, 1.0, 3.0, weight="cauchy", wvar=e)[0]
        assert h.hermitian_part[0, 0] == pytest.approx(pv, abs=1e-10)
        assert h.antihermitian_part[0, 0] == pytest.approx(0.07, abs=1e-15)


def chain_model(t=0.7, w0=-1.0, gamma=1.0):
    return SystemModel(levels_hb=np.array([[0.0]]),
                       channels=(Channel(kind=ChannelKind.CHAIN_LEAD, threshold=w0,
                                         dos_scale=t),),
                       couplings=np.array([[gamma]]))


def test_chain_lead_band_and_self_energy():
    t, w0 = 0.7, -1.0
    m = chain_model(t, w0)
    chan = m.channels[0]
    assert chan.band_top == pytest.approx(w0 + 4 * t)
    assert chan.hopping == t

    def rho_lead(w):
        eps = w - w0 - 2 * t
        return math.sqrt(max(4 * t * t - eps * eps, 0.0)) / (2 * math.pi * t * t)

    for e in (w0 - 0.5, w0 + 4 * t + 0.3):    # closed: plain quadrature
        h = build_h_eff(m, e)
        assert np.all(h.antihermitian_part == 0.0)
        oracle = quad(lambda w: rho_lead(w) / (e - w), w0, w0 + 4 * t, limit=400)[0]
        assert h.hermitian_part[0, 0] == pytest.approx(oracle, abs=1e-7)
    for e in (w0 + 0.3, w0 + 1.7):            # open: cauchy PV + residue
        h = build_h_eff(m, e)
        pv = -quad(lambda w: rho_lead(w), w0, w0 + 4 * t, weight="cauchy",
                   wvar=e, limit=400)[0]
        assert h.hermitian_part[0, 0] == pytest.approx(pv, abs=1e-6)
        assert h.antihermitian_part[0, 0] == pytest.approx(rho_lead(e), rel=1e-12)


def test_chain_lead_band_center_spectral_factor():
    t = 0.7
    m = chain_model(t)
    e_center = -1.0 + 2 * t
    v = coupling_vector(m, 0, e_center)
    assert v[0] == pytest.approx(math.sqrt(1.0 / (math.pi * t)), rel=1e-12)


def test_coupling_vector_wideband_and_closed():
    m = SystemModel(levels_hb=np.zeros((2, 2)), channels=(wideband(1 / math.pi),),
                    couplings=np.array([[1.0], [0.0]]))
    v = coupling_vector(m, 0, 0.37)
    assert v[0] == pytest.approx(1.0 / math.sqrt(math.pi), rel=1e-14)
    assert v[1] == 0.0
    assert is_channel_open(m, 0, -1e6)

    mf = flatband_model(0.1)
    assert not is_channel_open(mf, 0, 0.0)
    assert np.all(coupling_vector(mf, 0, 0.0) == 0.0)
    assert np.all(coupling_vector(mf, 0, 5.0) == 0.0)

    mz = SystemModel(levels_hb=np.zeros((2, 2)), channels=(wideband(0.4),),
                     couplings=np.zeros((2, 1)))
    assert np.all(coupling_vector(mz, 0, 0.0) == 0.0)


def test_residue_matches_coupling_vectors_and_is_psd():
    rng = np.random.default_rng(11)
    for _ in range(25):
        m = random_model(rng)
        for _ in range(3):
            e = float(rng.uniform(-1.2, 1.2))
            try:
                h = build_h_eff(m, e)
            except SingularSelfEnergyError:
                continue
            w = np.zeros((m.nlevels, m.nlevels))
            for c in range(m.nchannels):
                v = coupling_vector(m, c, e).real
                w += np.outer(v, v)
            scale = max(np.max(np.abs(h.antihermitian_part)), 1e-30)
            assert np.max(np.abs(h.antihermitian_part - w)) <= 1e-12 * scale
            assert np.min(np.linalg.eigvalsh(h.antihermitian_part)) >= -1e-12
            assert np.array_equal(h.matrix, h.matrix.T)
            recon = h.hermitian_part - 1j * math.pi * h.antihermitian_part
            assert np.max(np.abs(h.matrix - recon)) <= 1e-14 * max(1.0, scale)
            assert np.array_equal(h.open_channel_mask, open_channel_mask(m, e))


def test_wideband_width_trace_rule_is_u_independent():
    rng = np.random.default_rng(5)
    gam = np.array([[0.6], [-0.3], [0.4]])
    for _ in range(10):
        u = rng.normal(size=(3, 3)) * 0.2
        hb = np.diag([-0.5, 0.1, 0.8]) + np.triu(u, 1) + np.triu(u, 1).T
        m = SystemModel(levels_hb=hb, channels=(wideband(0.2),), couplings=gam)
        h = build_h_eff(m, 0.0)
        expected = expected_width_sum(m)
        assert expected == pytest.approx(2 * math.pi * 0.2 * np.sum(gam ** 2))
        spec = diagonalize(h)
        assert np.sum(spec.widths) == pytest.approx(expected, rel=1e-12)


def test_below_all_thresholds_h_eff_is_real_with_real_eigenvalues():
    m = flatband_model(0.08, lo=1.0, hi=3.0, e0=0.4)
    h = build_h_eff(m, 0.2)
    assert np.all(h.matrix.imag == 0.0)
    spec = diagonalize(h)
    assert np.all(spec.eigenvalues.imag == 0.0)
    assert np.all(spec.widths == 0.0)


def test_band_edge_and_bad_energy_errors():
    m = flatband_model(0.1)
    with pytest.raises(SingularSelfEnergyError):
        build_h_eff(m, 1.0)
    with pytest.raises(SingularSelfEnergyError):
        build_h_eff(m, 3.0)
    with pytest.raises(InvalidInputError):
        build_h_eff(m, math.nan)
    with pytest.raises(InvalidInputError):
        build_h_eff(m, math.inf)
    with pytest.raises(InvalidInputError):
        coupling_vector(m, 2, 0.0)


def test_model_validation():
    ok = dict(levels_hb=np.zeros((2, 2)), channels=(wideband(0.1),),
              couplings=np.zeros((2, 1)))
    SystemModel(**ok)
    with pytest.raises(InvalidInputError):
        SystemModel(**{**ok, "levels_hb": np.array([[0.0, 0.1], [0.2, 0.0]])})
    with pytest.raises(InvalidInputError):
        SystemModel(**{**ok, "couplings": np.zeros((3, 1))})
    with pytest.raises(InvalidInputError):
        SystemModel(**{**ok, "channels": ()})
    with pytest.raises(InvalidInputError):
        SystemModel(**{**ok, "levels_hb": np.full((2, 2), np.inf)})
    with pytest.raises(InvalidInputError):
        Channel(kind=ChannelKind.FLATBAND, threshold=2.0, band_top=1.0)
    with pytest.raises(InvalidInputError):
        Channel(kind=ChannelKind.CHAIN_LEAD, threshold=math.inf, dos_scale=1.0)
    with pytest.raises(InvalidInputError):
        Channel(kind=ChannelKind.WIDEBAND, dos_scale=-0.1)
    m = SystemModel(**ok)
    with pytest.raises(InvalidInputError):
        m.with_params(nope=1.0)


def test_expected_width_sum_none_for_sharp_bands():
    assert expected_width_sum(flatband_model(0.1)) is None
