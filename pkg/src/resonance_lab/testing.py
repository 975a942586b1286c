"""Reproducible random models and access to the bundled example models."""

from __future__ import annotations

from importlib import resources

import numpy as np

from .model import Channel, ChannelKind, SystemModel
from .modelfile import loads_model

__all__ = ["random_model", "random_open_energy", "bundled_model",
           "bundled_model_text"]


def random_model(rng, n_max: int = 8, c_max: int = 3,
                 coupling_scale=None, allow_sharp_bands: bool = True) -> SystemModel:
    """Draw a random valid model; level spread is O(1).

    ``coupling_scale`` is the typical dos*gamma^2 per channel (log-uniform in
    [1e-3, 0.3] when None), which spans isolated through overlapping
    resonance regimes.
    """
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    n = int(rng.integers(1, n_max + 1))
    c = int(rng.integers(1, c_max + 1))
    diag = np.sort(rng.uniform(-1.0, 1.0, n))
    off = rng.normal(size=(n, n)) * 0.05
    hb = np.diag(diag) + np.triu(off, 1) + np.triu(off, 1).T
    channels = []
    couplings = np.empty((n, c))
    for j in range(c):
        scale = (10.0 ** rng.uniform(-3, np.log10(0.3))
                 if coupling_scale is None else coupling_scale)
        kind_choices = [ChannelKind.WIDEBAND]
        if allow_sharp_bands:
            kind_choices += [ChannelKind.FLATBAND, ChannelKind.CHAIN_LEAD]
        kind = kind_choices[int(rng.integers(0, len(kind_choices)))]
        if kind is ChannelKind.WIDEBAND:
            channels.append(Channel(kind=kind, dos_scale=scale))
        elif kind is ChannelKind.FLATBAND:
            lo = rng.uniform(-2.5, -1.2)
            channels.append(Channel(kind=kind, threshold=lo,
                                    band_top=lo + rng.uniform(2.5, 5.0),
                                    dos_scale=scale))
        else:
            lo = rng.uniform(-2.5, -1.5)
            channels.append(Channel(kind=kind, threshold=lo,
                                    dos_scale=rng.uniform(0.8, 1.5)))
        profile = rng.normal(size=n)
        profile /= max(np.linalg.norm(profile), 1e-12)
        couplings[:, j] = profile * np.sqrt(scale)
    return SystemModel(levels_hb=hb, channels=tuple(channels), couplings=couplings)


def random_open_energy(model: SystemModel, rng, margin: float = 0.05) -> float:
    """An energy inside at least one open band, away from sharp band edges."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    for _ in range(500):
        e = float(rng.uniform(-1.5, 1.5))
        open_any = False
        too_close = False
        for ch in model.channels:
            if ch.kind is ChannelKind.WIDEBAND:
                open_any = True
                continue
            if ch.contains(e):
                open_any = True
            if np.isfinite(ch.threshold) and (abs(e - ch.threshold) < margin
                                              or abs(e - ch.band_top) < margin):
                too_close = True
        if open_any and not too_close:
            return e
    raise RuntimeError("could not draw an open energy for this model")


def bundled_model_text(name: str) -> str:
    ref = resources.files("resonance_lab").joinpath("models", f"{name}.model")
    return ref.read_text(encoding="utf-8")


def bundled_model(name: str) -> SystemModel:
    """Load one of the models shipped with the package (e.g. ``trapping2``,
    ``crossover4``, ``bic2``, ``bic2_asym``, ``decay1``, ``saturation6``)."""
    return loads_model(bundled_model_text(name))
