"""Physical system definition and the energy-dependent effective Hamiltonian.

A model is a finite set of N internal levels (real symmetric matrix ``levels_hb``,
diagonal = level energies, off-diagonal = internal interaction) coupled to C
scattering channels.  Opening the system replaces ``levels_hb`` by the complex
symmetric, energy-dependent matrix

    H_eff(E) = levels_hb + sum_C  gamma_C gamma_C^T * sigma_C(E)

where ``sigma_C(E)`` is the channel self-energy.  Conventions used throughout:

* Form factors are real and separable: the channel-C coupling of level ``lam``
  at energy ``w`` is ``couplings[lam, C] * f_C(w)`` with a kind-specific scalar
  profile ``f_C``.  ``sigma_C = PV integral - i*pi*rho_C(E)*f_C(E)^2`` so the
  anti-Hermitian part of H_eff is ``-i*pi*W(E)`` with
  ``W = sum_open  v_C(E) v_C(E)^T`` and ``v_C(E) = sqrt(rho_C f_C^2) * gamma_C``
  (the per-channel coupling vector).  W is positive semidefinite, hence all
  resonance widths are nonnegative.
* Below every threshold the residue vanishes exactly and H_eff(E) is real
  symmetric; only the principal-value level shift survives.
* Three closed-form channel kinds (no quadrature in the hot path):

  WIDEBAND    rho*f^2 = dos_scale on the whole axis.  PV = 0, channel always
              open: sigma = -i*pi*dos_scale.
  FLATBAND    rho*f^2 = dos_scale on [threshold, band_top].
              PV = dos_scale * ln|(E - threshold)/(E - band_top)|
              (checked against adaptive quadrature of the defining integral;
              note the sign: a band above the level pushes it down).
              Residue only strictly inside the band; the PV shift diverges
              logarithmically at the edges, which is reported as an error
              rather than regularized.
  CHAIN_LEAD  semi-infinite tight-binding lead, hopping t = dos_scale,
              site energies threshold + 2t, so the band is
              [threshold, threshold + 4t].  With eps = E - threshold - 2t:
              sigma(E) = (eps - i*sqrt(4t^2 - eps^2)) / (2 t^2)   inside,
              sigma(E) = (eps - sign(eps)*sqrt(eps^2 - 4t^2)) / (2 t^2)
              outside (the branch decaying as |E| grows).  The in-band
              spectral density is sqrt(4t^2 - eps^2)/(2 pi t^2), maximal
              1/(pi t) at band center.

Matrix entries of ``levels_hb``/``couplings`` may be declared as scalar
multiples of named control parameters (see :class:`ParamRef`); binding new
parameter values produces a fresh immutable model, which is what parameter
sweeps iterate over.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidInputError, SingularSelfEnergyError

__all__ = [
    "ChannelKind",
    "Channel",
    "ParamRef",
    "SystemModel",
    "EffectiveHamiltonian",
    "build_h_eff",
    "coupling_vector",
    "is_channel_open",
    "open_channel_mask",
    "expected_width_sum",
]

#: |E - band_edge| below this (times the energy scale) counts as "exactly at
#: the edge" for the FLATBAND logarithmic singularity.
EDGE_TOL = 1e-12


class ChannelKind(enum.Enum):
    WIDEBAND = "wideband"
    FLATBAND = "flatband"
    CHAIN_LEAD = "chain_lead"


@dataclass(frozen=True)
class Channel:
    """One scattering continuum.

    ``dos_scale`` is the density-of-states normalization for WIDEBAND and
    FLATBAND; for CHAIN_LEAD it is reinterpreted as the lead hopping t > 0
    (exposed as :attr:`hopping`), and ``band_top`` is derived as
    ``threshold + 4 t``.
    """

    kind: ChannelKind
    threshold: float = -math.inf
    band_top: float = math.inf
    dos_scale: float = 1.0

    def __post_init__(self):
        if self.dos_scale <= 0 or not math.isfinite(self.dos_scale):
            raise InvalidInputError(f"dos_scale must be finite and > 0, got {self.dos_scale}")
        if self.kind is ChannelKind.FLATBAND:
            if not (math.isfinite(self.threshold) and math.isfinite(self.band_top)):
                raise InvalidInputError("FLATBAND needs finite threshold and band_top")
            if not self.threshold < self.band_top:
                raise InvalidInputError("FLATBAND needs threshold < band_top")
        elif self.kind is ChannelKind.CHAIN_LEAD:
            if not math.isfinite(self.threshold):
                raise InvalidInputError("CHAIN_LEAD needs a finite threshold")
            object.__setattr__(self, "band_top", self.threshold + 4.0 * self.dos_scale)
        elif self.kind is ChannelKind.WIDEBAND:
            object.__setattr__(self, "threshold", -math.inf)
            object.__setattr__(self, "band_top", math.inf)

    @property
    def hopping(self) -> float:
        if self.kind is not ChannelKind.CHAIN_LEAD:
            raise InvalidInputError("hopping is only defined for CHAIN_LEAD channels")
        return self.dos_scale

    def contains(self, energy: float) -> bool:
        """Whether ``energy`` lies strictly inside the open band."""
        return self.threshold < energy < self.band_top

    def pv_coefficient(self, energy: float) -> float:
        """Scalar multiplying gamma_C gamma_C^T in the Hermitian (PV) shift."""
        if self.kind is ChannelKind.WIDEBAND:
            return 0.0
        if self.kind is ChannelKind.FLATBAND:
            scale = max(1.0, abs(self.threshold), abs(self.band_top))
            if (abs(energy - self.threshold) < EDGE_TOL * scale
                    or abs(energy - self.band_top) < EDGE_TOL * scale):
                raise SingularSelfEnergyError(
                    f"PV shift diverges at the band edge (E={energy}, "
                    f"band [{self.threshold}, {self.band_top}])")
            return self.dos_scale * math.log(
                abs((energy - self.threshold) / (energy - self.band_top)))
        # CHAIN_LEAD: continuous through the band edges, no singularity.
        t = self.dos_scale
        eps = energy - self.threshold - 2.0 * t
        if abs(eps) < 2.0 * t:
            return eps / (2.0 * t * t)
        return (eps - math.copysign(math.sqrt(eps * eps - 4.0 * t * t), eps)) / (2.0 * t * t)

    def spectral_weight(self, energy: float) -> float:
        """rho_C(E) * f_C(E)^2; the residue of H_eff is -i*pi*weight*gamma gamma^T."""
        if self.kind is ChannelKind.WIDEBAND:
            return self.dos_scale
        if not self.contains(energy):
            return 0.0
        if self.kind is ChannelKind.FLATBAND:
            return self.dos_scale
        t = self.dos_scale
        eps = energy - self.threshold - 2.0 * t
        return math.sqrt(max(4.0 * t * t - eps * eps, 0.0)) / (2.0 * math.pi * t * t)


@dataclass(frozen=True)
class ParamRef:
    """A matrix entry declared as ``coeff * value-of(name)``."""

    name: str
    coeff: float = 1.0

    def evaluate(self, params: dict) -> float:
        if self.name not in params:
            raise InvalidInputError(f"undeclared control parameter '{self.name}'")
        return self.coeff * params[self.name]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SystemModel:
    """Closed-system Hamiltonian, channels and couplings; the single source of
    physical truth.  Immutable: safe to share across concurrent workers.

    ``hb_refs`` / ``coupling_refs`` map matrix positions to :class:`ParamRef`
    entries; the numeric arrays always hold the values at the current
    ``control_params``.  Use :meth:`with_params` to rebind.
    """

    levels_hb: np.ndarray
    channels: tuple
    couplings: np.ndarray
    control_params: dict = field(default_factory=dict)
    hb_refs: dict = field(default_factory=dict)
    coupling_refs: dict = field(default_factory=dict)

    def __post_init__(self):
        hb = np.asarray(self.levels_hb, dtype=float)
        if hb.ndim != 2 or hb.shape[0] != hb.shape[1] or hb.shape[0] < 1:
            raise InvalidInputError(f"levels_hb must be square N x N with N >= 1, got {hb.shape}")
        if not np.array_equal(hb, hb.T):
            raise InvalidInputError("levels_hb must be exactly symmetric")
        if not np.all(np.isfinite(hb)):
            raise InvalidInputError("levels_hb entries must be finite")
        channels = tuple(self.channels)
        if len(channels) < 1:
            raise InvalidInputError("at least one channel is required")
        cp = np.asarray(self.couplings, dtype=float)
        if cp.shape != (hb.shape[0], len(channels)):
            raise InvalidInputError(
                f"couplings must have shape (N, C)=({hb.shape[0]}, {len(channels)}), got {cp.shape}")
        if not np.all(np.isfinite(cp)):
            raise InvalidInputError("coupling entries must be finite")
        object.__setattr__(self, "levels_hb", _readonly(hb))
        object.__setattr__(self, "channels", channels)
        object.__setattr__(self, "couplings", _readonly(cp))
        object.__setattr__(self, "control_params", dict(self.control_params))

    @property
    def nlevels(self) -> int:
        return self.levels_hb.shape[0]

    @property
    def nchannels(self) -> int:
        return len(self.channels)

    def with_params(self, **values) -> "SystemModel":
        """New model with control parameters rebound and every referencing
        matrix entry re-evaluated (symmetric partners of H_B entries included)."""
        unknown = set(values) - set(self.control_params)
        if unknown:
            raise InvalidInputError(f"unknown control parameter(s): {sorted(unknown)}")
        params = {**self.control_params, **values}
        hb = np.array(self.levels_hb)
        for (i, j), ref in self.hb_refs.items():
            hb[i, j] = hb[j, i] = ref.evaluate(params)
        cp = np.array(self.couplings)
        for (i, c), ref in self.coupling_refs.items():
            cp[i, c] = ref.evaluate(params)
        return replace(self, levels_hb=hb, couplings=cp, control_params=params)


@dataclass(frozen=True)
class EffectiveHamiltonian:
    """H_eff evaluated at one energy, split into its Hermitian part
    (levels_hb + PV shift, real symmetric) and the width matrix W(E) with
    ``matrix = hermitian_part - i*pi*antihermitian_part``."""

    energy: float
    matrix: np.ndarray
    hermitian_part: np.ndarray
    antihermitian_part: np.ndarray
    open_channel_mask: np.ndarray

    @property
    def nlevels(self) -> int:
        return self.matrix.shape[0]


def build_h_eff(model: SystemModel, energy: float) -> EffectiveHamiltonian:
    """Assemble H_eff(E) from the per-channel closed-form self-energies.

    Raises
    ------
    InvalidInputError
        non-finite energy.
    SingularSelfEnergyError
        E exactly at a FLATBAND band edge.
    """
    if not (np.isscalar(energy) or np.ndim(energy) == 0) or not math.isfinite(float(energy)):
        raise InvalidInputError(f"energy must be a finite real number, got {energy!r}")
    energy = float(energy)
    n = model.nlevels
    herm = np.array(model.levels_hb)
    width = np.zeros((n, n))
    mask = np.zeros(model.nchannels, dtype=bool)
    for c, chan in enumerate(model.channels):
        gam = model.couplings[:, c]
        pv = chan.pv_coefficient(energy)
        if pv != 0.0:
            herm += pv * np.outer(gam, gam)
        w = chan.spectral_weight(energy)
        if w != 0.0:
            mask[c] = True
            width += w * np.outer(gam, gam)
    matrix = herm - 1j * math.pi * width
    matrix.setflags(write=False)
    herm.setflags(write=False)
    width.setflags(write=False)
    mask.setflags(write=False)
    return EffectiveHamiltonian(energy=energy, matrix=matrix, hermitian_part=herm,
                                antihermitian_part=width, open_channel_mask=mask)


def coupling_vector(model: SystemModel, channel: int, energy: float) -> np.ndarray:
    """Coupling column v_C(E) = sqrt(rho_C f_C^2) * gamma_C (length N, complex).

    For a closed (evanescent) channel the vector is identically zero; use
    :func:`is_channel_open` as the evanescence flag.  By construction
    ``sum_open  v_C v_C^T`` reproduces the anti-Hermitian part of
    :func:`build_h_eff` through an independent code path.
    """
    if not 0 <= channel < model.nchannels:
        raise InvalidInputError(f"channel index {channel} out of range")
    if not math.isfinite(float(energy)):
        raise InvalidInputError(f"energy must be finite, got {energy!r}")
    w = model.channels[channel].spectral_weight(float(energy))
    return (math.sqrt(w) * model.couplings[:, channel]).astype(complex)


def is_channel_open(model: SystemModel, channel: int, energy: float) -> bool:
    if not 0 <= channel < model.nchannels:
        raise InvalidInputError(f"channel index {channel} out of range")
    chan = model.channels[channel]
    return chan.kind is ChannelKind.WIDEBAND or chan.contains(float(energy))


def open_channel_mask(model: SystemModel, energy: float) -> np.ndarray:
    return np.array([is_channel_open(model, c, energy) for c in range(model.nchannels)])


def expected_width_sum(model: SystemModel):
    """Trace rule sum_lambda Gamma_lambda = 2*pi*sum_C dos_C*|gamma_C|^2.

    Exact (independently of the internal interaction) when every channel is
    WIDEBAND, because then H_eff is energy independent and the anti-Hermitian
    trace is invariant under the similarity to the eigenbasis.  Returns None
    for models with any sharp-band channel.
    """
    if any(ch.kind is not ChannelKind.WIDEBAND for ch in model.channels):
        return None
    total = 0.0
    for c, ch in enumerate(model.channels):
        total += ch.dos_scale * float(np.sum(model.couplings[:, c] ** 2))
    return 2.0 * math.pi * total
