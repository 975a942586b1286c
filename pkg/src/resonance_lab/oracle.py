"""Brute-force full-space reference: discretize every continuum into bins and
diagonalize the resulting (N + sum_C M_C)-dimensional Hermitian matrix.

This is deliberately independent of the effective-Hamiltonian machinery: the
only shared input is the model definition.  Level-bin couplings are
``gamma[lam, C] * f_C(w_k) * sqrt(rho_C(w_k) dw_k)`` so that the squared bin
weights Riemann-sum the channel density of states:

* FLATBAND    bins uniform in energy, weight^2 = dos_scale * dw.
* CHAIN_LEAD  bins uniform in lead momentum kappa in (0, pi) with
              w(kappa) = threshold + 2t(1 - cos kappa) and
              weight^2 = (2/pi) sin^2(kappa) dkappa (the summed weights equal
              the unit band integral exactly).
* WIDEBAND    has no finite band; it must be truncated to an explicit energy
              window, reported via a warning.

Everything downstream is exact dense linear algebra; accuracy is limited only
by the bin count (level-width resolution Gamma >> dw and recurrence time
2 pi / dw).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit

from .errors import InvalidInputError
from .model import ChannelKind, SystemModel

__all__ = ["DiscretizedFullSpace", "SurvivalResult", "build_full",
           "survival_probability", "fit_lorentzian_resonance"]


@dataclass(frozen=True)
class DiscretizedFullSpace:
    """Hermitian Friedrichs-form matrix with per-channel bin bookkeeping."""

    nlevels: int
    hamiltonian: np.ndarray
    bin_energies: tuple          # per channel, strictly increasing midpoints
    bin_weights: tuple           # per channel, sqrt(rho dw) scale factors
    recurrence_time: float
    _eig: list = field(default_factory=lambda: [None], repr=False, compare=False)

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    def eigensystem(self):
        """Cached full diagonalization (the dominant cost, done once)."""
        if self._eig[0] is None:
            self._eig[0] = np.linalg.eigh(self.hamiltonian)
        return self._eig[0]


@dataclass(frozen=True)
class SurvivalResult:
    times: np.ndarray
    probability: np.ndarray
    amplitude: np.ndarray
    q_weight: np.ndarray
    recurrence_warning: bool


def _channel_bins(channel, bins, window):
    if channel.kind is ChannelKind.FLATBAND:
        edges = np.linspace(channel.threshold, channel.band_top, bins + 1)
        mids = 0.5 * (edges[:-1] + edges[1:])
        dw = edges[1] - edges[0]
        weights = np.full(bins, math.sqrt(channel.dos_scale * dw))
        return mids, weights
    if channel.kind is ChannelKind.CHAIN_LEAD:
        t = channel.hopping
        dk = math.pi / bins
        kappa = (np.arange(bins) + 0.5) * dk
        mids = channel.threshold + 2.0 * t * (1.0 - np.cos(kappa))
        weights = np.sqrt((2.0 / math.pi) * np.sin(kappa) ** 2 * dk)
        return mids, weights
    # WIDEBAND: truncate to the declared window.
    if window is None:
        raise InvalidInputError(
            "a WIDEBAND channel has no finite band; pass window=(lo, hi)")
    lo, hi = float(window[0]), float(window[1])
    if not lo < hi:
        raise InvalidInputError(f"window must satisfy lo < hi, got {window}")
    warnings.warn("WIDEBAND channel truncated to the window "
                  f"[{lo}, {hi}] for discretization", stacklevel=3)
    edges = np.linspace(lo, hi, bins + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    dw = edges[1] - edges[0]
    weights = np.full(bins, math.sqrt(channel.dos_scale * dw))
    return mids, weights


def build_full(model: SystemModel, bins_per_channel: int,
               window=None) -> DiscretizedFullSpace:
    """Assemble the discretized Hermitian full-space Hamiltonian.

    ``bins_per_channel`` >= 100; ``window`` is required iff the model has a
    WIDEBAND channel.  Basis order: the N levels first, then each channel's
    bins in channel order.
    """
    if bins_per_channel < 100:
        raise InvalidInputError("bins_per_channel must be >= 100")
    n = model.nlevels
    all_mids, all_weights = [], []
    for chan in model.channels:
        mids, weights = _channel_bins(chan, bins_per_channel, window)
        all_mids.append(mids)
        all_weights.append(weights)
    dim = n + sum(m.size for m in all_mids)
    h = np.zeros((dim, dim))
    h[:n, :n] = model.levels_hb
    offset = n
    min_dw = math.inf
    for c, (mids, weights) in enumerate(zip(all_mids, all_weights)):
        sl = slice(offset, offset + mids.size)
        h[sl, sl] = np.diag(mids)
        block = np.outer(model.couplings[:, c], weights)
        h[:n, sl] = block
        h[sl, :n] = block.T
        min_dw = min(min_dw, float(np.min(np.diff(mids))))
        offset += mids.size
    h.setflags(write=False)
    return DiscretizedFullSpace(nlevels=n, hamiltonian=h,
                                bin_energies=tuple(all_mids),
                                bin_weights=tuple(all_weights),
                                recurrence_time=2.0 * math.pi / min_dw)


def survival_probability(full: DiscretizedFullSpace, init, times) -> SurvivalResult:
    """Exact evolution of a level-space initial state.

    ``init`` lives on the N levels and is normalized internally.  Returns the
    survival probability |<init| e^{-iHt} |init>|^2, the complex amplitude and
    the weight remaining in the level (Q) subspace; times beyond the
    discretization recurrence time only set ``recurrence_warning``.
    """
    times = np.asarray(times, dtype=float)
    init = np.asarray(init, dtype=float)
    if init.shape != (full.nlevels,):
        raise InvalidInputError(f"init must have length {full.nlevels}")
    norm = np.linalg.norm(init)
    if norm == 0:
        raise InvalidInputError("init must be nonzero")
    init = init / norm
    evals, vecs = full.eigensystem()
    a = vecs[:full.nlevels, :].T @ init          # overlap of each eigenstate
    phases = np.exp(-1j * np.outer(times, evals))
    amplitude = phases @ (a * a)
    q_block = vecs[:full.nlevels, :] * a[None, :]
    psi_q = phases @ q_block.T
    q_weight = np.sum(np.abs(psi_q) ** 2, axis=1)
    return SurvivalResult(times=times, probability=np.abs(amplitude) ** 2,
                          amplitude=amplitude, q_weight=q_weight,
                          recurrence_warning=bool(np.max(times, initial=0.0)
                                                  > full.recurrence_time))


def fit_lorentzian_resonance(full: DiscretizedFullSpace, init,
                             gamma_estimate: float, e_estimate: float = None):
    """Extract (E_0, Gamma) from the Q-projected spectral function.

    The weights |<init|chi_j>|^2 of the full-space eigenstates sample a
    Lorentzian of FWHM Gamma around an isolated resonance; a window of
    10 * gamma_estimate around the peak is fit.  Returns (e_fit, gamma_fit).
    """
    init = np.asarray(init, dtype=float)
    init = init / np.linalg.norm(init)
    evals, vecs = full.eigensystem()
    w = (vecs[:full.nlevels, :].T @ init) ** 2
    if e_estimate is None:
        e_estimate = float(evals[np.argmax(w)])
    half = 5.0 * gamma_estimate
    sel = (evals > e_estimate - half) & (evals < e_estimate + half)
    if np.count_nonzero(sel) < 8:
        raise InvalidInputError("fit window contains too few eigenvalues; "
                                "increase bins or gamma_estimate")
    x, y = evals[sel], w[sel]

    def lorentz(e, e0, gamma, amp):
        return amp * (gamma / 2.0) / ((e - e0) ** 2 + gamma ** 2 / 4.0)

    p0 = (e_estimate, gamma_estimate, float(np.max(y) * gamma_estimate / 2.0))
    popt, _ = curve_fit(lorentz, x, y, p0=p0, maxfev=20000)
    return float(popt[0]), float(abs(popt[1]))
