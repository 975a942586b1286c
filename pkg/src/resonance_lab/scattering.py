"""Resonance S-matrix, transmission amplitudes and wave-function phase rigidity.

All scattering quantities are built from the eigen-decomposition of H_eff(E)
at the probe energy and the open-channel coupling vectors v_C(E) evaluated at
the same energy.  With matrix elements ``m_C(lam) = v_C(E)^T phi_lam`` (the
bilinear left-vector convention; the couplings are real):

    S_res[C', C]  =  2 pi i  sum_lam  m_C'(lam) m_C(lam) / (E - z_lam)
    S_full        =  I - S_res                (on the open-channel block)
    t[C' <- C]    =  -2 pi i sum_lam m_C'(lam) m_C(lam) / (E - z_lam)

The 2*pi normalization between the resonance amplitude and the unitary S is
fixed by the unitarity requirement itself: because the anti-Hermitian part of
H_eff is exactly -i pi sum_open v_C v_C^T, the open block
``I - 2 pi i V^T (E - H_eff)^(-1) V`` is unitary identically in E and in the
coupling strength, which the implementation verifies on every call.  A single
isolated level then gives S_res = i Gamma / (E - E_0 + i Gamma/2) (peak
modulus 2, Breit-Wigner lineshape of FWHM Gamma) and perfect resonant
transmission |t| = 1 for two symmetric leads.

The transmission is computed through both equivalent routes (the eigenvalue
sum above, and -2 pi i v_L^T Psi with the internal vector
Psi = sum_lam c_lam phi_lam, c_lam = m_C(lam)/(E - z_lam)); they must agree to
1e-9, which guards the sign/conjugation conventions.

Phase rigidity of an internal vector Psi is the gauge-invariant ratio
``rho = |sum_i Psi_i^2| / sum_i |Psi_i|^2`` with the rotation angle
``theta = -arg(sum_i Psi_i^2)/2`` (the rotation e^{i theta} Psi makes the
bilinear sum real and nonnegative).  rho = 1 for a real vector up to a global
phase; rho = 0 when real and imaginary parts are orthogonal with equal weight
(maximal alignment with a traveling environment mode); for a single dominant
resonance rho reduces to that state's r_lambda.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (ClosedChannelError, DefectiveSpectrumError,
                     InternalConsistencyError, InvalidInputError,
                     UndefinedRigidityError)
from .model import SystemModel, build_h_eff, coupling_vector, open_channel_mask
from .spectral import ResonanceSpectrum, diagonalize

__all__ = [
    "ScatteringPoint",
    "s_matrix_resonant",
    "s_matrix_full",
    "transmission",
    "phase_rigidity_psi",
    "c_coefficients",
    "scattering_point",
    "unitarity_residual",
]

_UNITARITY_TOL = 1e-6
_EQUIVALENCE_TOL = 1e-9


@dataclass(frozen=True)
class ScatteringPoint:
    """Everything scattering-related at one energy.

    ``s_res`` is C x C with zero rows/columns for closed channels; ``s_full``
    lives on the open-channel block only (``open_channels`` maps block index
    to channel index).  ``transmission`` maps ordered open channel pairs
    (from, to) to the amplitude.  ``c_coeffs`` are the internal expansion
    coefficients for the designated incident channel, normalized to
    sum |c|^2 = 1; ``rho``/``theta`` is the phase rigidity of the internal
    vector they span.
    """

    energy: float
    s_res: np.ndarray
    s_full: np.ndarray
    open_channels: tuple
    transmission: dict
    rho: float
    theta: float
    c_coeffs: np.ndarray
    incident_channel: int
    unitarity_residual: float


def _matrix_elements(model, spectrum, energy):
    """m[C, lam] = v_C(E)^T phi_lam for every channel (zero when closed)."""
    v = np.column_stack([coupling_vector(model, c, energy)
                         for c in range(model.nchannels)])
    return v.T @ spectrum.right_eigenvectors


def _require_clean(spectrum):
    if spectrum.defective:
        raise DefectiveSpectrumError(
            "spectrum is defective (exceptional-point proximal); "
            "perturb the energy or parameter and retry")


def s_matrix_resonant(model: SystemModel, spectrum: ResonanceSpectrum,
                      energy: float) -> np.ndarray:
    """Resonance amplitude matrix S_res (C x C, closed channels zeroed)."""
    _require_clean(spectrum)
    m = _matrix_elements(model, spectrum, float(energy))
    return 2j * math.pi * (m / (energy - spectrum.eigenvalues)) @ m.T


def unitarity_residual(s: np.ndarray) -> float:
    n = s.shape[0]
    return float(np.linalg.norm(s.conj().T @ s - np.eye(n)))


def s_matrix_full(model: SystemModel, spectrum: ResonanceSpectrum,
                  energy: float) -> np.ndarray:
    """Unitary S matrix on the open-channel block.

    Closed channels are excluded from the dimensions rather than padded; with
    no open channel the block is 0 x 0.  A unitarity residual above 1e-6
    raises :class:`InternalConsistencyError` (that would be a library bug,
    not a user error).
    """
    s, _ = _s_full_with_channels(model, spectrum, float(energy))
    return s


def _s_full_with_channels(model, spectrum, energy):
    _require_clean(spectrum)
    open_idx = tuple(int(c) for c in np.nonzero(open_channel_mask(model, energy))[0])
    if not open_idx:
        return np.zeros((0, 0), dtype=complex), open_idx
    m = _matrix_elements(model, spectrum, energy)[list(open_idx), :]
    s = np.eye(len(open_idx), dtype=complex) \
        - 2j * math.pi * (m / (energy - spectrum.eigenvalues)) @ m.T
    resid = unitarity_residual(s)
    if resid > _UNITARITY_TOL:
        raise InternalConsistencyError(
            f"S matrix unitarity violated (residual {resid:.3e}); "
            "this indicates an internal bug")
    return s, open_idx


def transmission(model: SystemModel, spectrum: ResonanceSpectrum, energy: float,
                 from_channel: int, to_channel: int) -> complex:
    """Transmission amplitude between two distinct open channels.

    Evaluated through the eigenvalue sum and independently through the
    internal-vector route; a disagreement beyond 1e-9 relative raises
    :class:`InternalConsistencyError`.
    """
    if from_channel == to_channel:
        raise InvalidInputError("from_channel and to_channel must differ")
    _require_clean(spectrum)
    energy = float(energy)
    for c in (from_channel, to_channel):
        if not open_channel_mask(model, energy)[c]:
            raise ClosedChannelError(f"channel {c} is closed at E={energy}")
    v_from = coupling_vector(model, from_channel, energy)
    v_to = coupling_vector(model, to_channel, energy)
    m_from = v_from @ spectrum.right_eigenvectors
    m_to = v_to @ spectrum.right_eigenvectors
    t_sum = -2j * math.pi * np.sum(m_to * m_from / (energy - spectrum.eigenvalues))
    psi = spectrum.right_eigenvectors @ (m_from / (energy - spectrum.eigenvalues))
    t_psi = -2j * math.pi * (v_to @ psi)
    if abs(t_sum - t_psi) > _EQUIVALENCE_TOL * max(1.0, abs(t_sum)):
        raise InternalConsistencyError(
            f"transmission routes disagree: {t_sum} vs {t_psi}")
    return complex(t_sum)


def c_coefficients(model: SystemModel, spectrum: ResonanceSpectrum,
                   energy: float, channel: int, normalized: bool = True) -> np.ndarray:
    """Internal expansion coefficients c_lam = m_C(lam)/(E - z_lam) for
    excitation through one channel; normalized to sum |c|^2 = 1 by default."""
    _require_clean(spectrum)
    energy = float(energy)
    if not open_channel_mask(model, energy)[channel]:
        raise ClosedChannelError(f"channel {channel} is closed at E={energy}")
    m = coupling_vector(model, channel, energy) @ spectrum.right_eigenvectors
    c = m / (energy - spectrum.eigenvalues)
    if normalized:
        norm = math.sqrt(float(np.sum(np.abs(c) ** 2)))
        if norm == 0.0:
            raise UndefinedRigidityError("zero internal excitation (all couplings vanish)")
        c = c / norm
    return c


def phase_rigidity_psi(spectrum: ResonanceSpectrum, c_coeffs) -> tuple:
    """(rho, theta) of the internal vector Psi = sum_lam c_lam phi_lam."""
    c = np.asarray(c_coeffs, dtype=complex)
    if c.shape != spectrum.eigenvalues.shape:
        raise InvalidInputError(
            f"c_coeffs must have length {spectrum.nlevels}, got {c.shape}")
    psi = spectrum.right_eigenvectors @ c
    norm2 = float(np.sum(np.abs(psi) ** 2))
    if norm2 == 0.0:
        raise UndefinedRigidityError("phase rigidity of the zero vector is undefined")
    bil = complex(np.sum(psi * psi))
    rho = abs(bil) / norm2
    theta = -0.5 * math.atan2(bil.imag, bil.real)
    return rho, theta


def scattering_point(model: SystemModel, energy: float, *,
                     incident_channel: int = 0,
                     spectrum: ResonanceSpectrum = None,
                     defect_tol: float = 1e-6) -> ScatteringPoint:
    """Assemble the full scattering picture at one energy.

    Diagonalizes H_eff(E) unless a matching ``spectrum`` is supplied.  The
    incident channel must be open; it defines ``c_coeffs`` and the phase
    rigidity entry.
    """
    energy = float(energy)
    if spectrum is None:
        spectrum = diagonalize(build_h_eff(model, energy), defect_tol=defect_tol)
    s_res = s_matrix_resonant(model, spectrum, energy)
    s_full, open_idx = _s_full_with_channels(model, spectrum, energy)
    trans = {}
    for a in open_idx:
        for b in open_idx:
            if a != b:
                trans[(a, b)] = transmission(model, spectrum, energy, a, b)
    c = c_coefficients(model, spectrum, energy, incident_channel)
    rho, theta = phase_rigidity_psi(spectrum, c)
    return ScatteringPoint(energy=energy, s_res=s_res, s_full=s_full,
                           open_channels=open_idx, transmission=trans,
                           rho=rho, theta=theta, c_coeffs=c,
                           incident_channel=incident_channel,
                           unitarity_residual=unitarity_residual(s_full))
