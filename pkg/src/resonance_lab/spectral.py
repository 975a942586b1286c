"""Complex-symmetric eigenproblem, fixed-point resonance solving, parameter
sweeps with branch continuation, and exceptional-point detection.

Eigenvector conventions
-----------------------
H_eff(E) is complex symmetric, so left eigenvectors are the plain (unconjugated)
transposes of right ones.  Right eigenvectors are normalized with the complex
bilinear form, ``sum_i phi_i^2 = 1`` (not the Hermitian norm), and the residual
sign freedom is fixed by requiring the largest-magnitude component to have its
argument in (-pi/2, pi/2].  With this choice:

* distinct-eigenvalue vectors satisfy ``phi_a^T phi_b = delta_ab`` exactly,
* ``A = sum_i |phi_i|^2 >= 1`` with equality only for real vectors,
* the per-state phase rigidity is ``r = |sum phi^2| / sum |phi|^2 = 1/A``,
* an exactly real H_eff (all channels closed) reduces to the ordinary
  orthonormal real eigenbasis with A = r = 1.

Near an exceptional point the bilinear self-product of the coalescing pair
tends to zero; below ``defect_tol`` the vector is left at unit Hermitian norm,
the spectrum is flagged ``defective`` and A is reported as inf (r stays
well-defined and tends to 0).  The Gram matrix B of the normalized vectors is
Hermitian with ``B conj(B) = I``; its off-diagonal part is antisymmetric
(purely imaginary) exactly for a two-state spectrum and to second order in
``|B|`` otherwise.

Fixed point and sweeps
----------------------
Physical resonance positions solve ``E = Re z_lambda(E)``.  They are found by
the damped iteration ``E_{k+1} = (1-alpha) E_k + alpha Re z_lambda(E_k)`` with
alpha = 0.5 (robust near thresholds where the principal-value shift steepens),
following the branch between iterations by maximal bilinear eigenvector
overlap.  For energy-independent (all-wideband) models the seed is already the
fixed point and the iteration stops after one step.  Sweeps continue all N
branches over a parameter grid, seeding each point from the previous one and
relabelling by an optimal overlap assignment; ambiguous steps are bisected (up
to 8 levels) before giving up.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment, minimize_scalar

from .errors import (BranchAmbiguityError, InvalidInputError,
                     NumericalFailureError)
from .model import EffectiveHamiltonian, SystemModel, build_h_eff

__all__ = [
    "ResonanceSpectrum",
    "ResonanceState",
    "SweepResult",
    "ExceptionalPoint",
    "diagonalize",
    "solve_fixed_point",
    "sweep",
    "find_exceptional_points",
    "DEFAULT_TOL_FP",
    "DEFAULT_DEFECT_TOL",
    "DEFAULT_SEP_TOL",
    "DEFAULT_RIG_TOL",
]

DEFAULT_TOL_FP = 1e-10
DEFAULT_DEFECT_TOL = 1e-6
DEFAULT_SEP_TOL = 1e-3
DEFAULT_RIG_TOL = 1e-2

_MAX_FP_ITER = 200
_FP_ALPHA = 0.5
_OVERLAP_GAP = 1e-6
_MIN_OVERLAP = 0.5
_MAX_REFINE = 8


@dataclass(frozen=True)
class ResonanceSpectrum:
    """Biorthogonally normalized eigenpairs of H_eff at one energy.

    ``eigenvalues`` are ordered by ascending real part (imaginary part breaks
    ties); ``right_eigenvectors[:, k]`` belongs to ``eigenvalues[k]``.
    ``b_matrix`` is the Hermitian Gram matrix of the normalized vectors with
    its diagonal equal to ``a_diag``.
    """

    energy: float
    eigenvalues: np.ndarray
    right_eigenvectors: np.ndarray
    a_diag: np.ndarray
    b_matrix: np.ndarray
    phase_rigidity: np.ndarray
    defective: bool

    @property
    def nlevels(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def widths(self) -> np.ndarray:
        return -2.0 * self.eigenvalues.imag


@dataclass(frozen=True)
class ResonanceState:
    """One fixed-point-converged resonance: E = Re z(E), Gamma = -2 Im z(E)."""

    branch_id: int
    e_lambda: float
    gamma_lambda: float
    eigvec: np.ndarray
    converged: bool
    iterations: int
    a_lambda: float = math.nan
    rigidity: float = math.nan
    eigenvalue: complex = complex(math.nan, math.nan)

    @property
    def lifetime(self) -> float:
        """tau = hbar/Gamma with hbar = 1; inf for a zero-width state."""
        return math.inf if self.gamma_lambda == 0 else 1.0 / self.gamma_lambda


@dataclass(frozen=True)
class ExceptionalPoint:
    """Coalescence of two eigenvalue branches located along a sweep."""

    param_value: float
    energy_value: complex
    branch_pair: tuple
    min_separation: float
    min_rigidity: float
    bracket: tuple
    coalescence_defect: float = math.nan


@dataclass(frozen=True)
class SweepResult:
    """Branch-resolved trajectories over a parameter grid.

    Arrays are indexed ``[grid point, branch]``; eigenvectors as
    ``[grid point, branch, component]``.  The bound model and parameter name
    are kept so detectors can re-solve at refined parameter values.
    """

    model: SystemModel
    param: str
    grid: np.ndarray
    e_lambda: np.ndarray
    gamma_lambda: np.ndarray
    rigidity: np.ndarray
    a_diag: np.ndarray
    converged: np.ndarray
    eigenvalues: np.ndarray
    eigvecs: np.ndarray
    iterations: np.ndarray

    @property
    def nbranches(self) -> int:
        return self.e_lambda.shape[1]


def _as_matrix(h):
    if isinstance(h, EffectiveHamiltonian):
        return h.matrix, h.energy
    m = np.asarray(h, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {m.shape}")
    return m, math.nan


def diagonalize(h, defect_tol: float = DEFAULT_DEFECT_TOL) -> ResonanceSpectrum:
    """Full eigendecomposition with bilinear normalization and diagnostics.

    Accepts an :class:`EffectiveHamiltonian` or a bare complex-symmetric
    matrix.  Exactly real input is diagonalized on the real symmetric path so
    that closed-channel spectra come out with exactly real eigenvalues and
    A = r = 1.
    """
    matrix, energy = _as_matrix(h)
    n = matrix.shape[0]
    try:
        if not np.any(matrix.imag):
            z, vr = np.linalg.eigh(matrix.real)
            z = z.astype(complex)
            vr = vr.astype(complex)
        else:
            z, vr = np.linalg.eig(matrix)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(
            f"eigensolver failed: {exc}",
            diagnostics={"norm": float(np.linalg.norm(matrix)), "n": n}) from exc

    order = np.lexsort((z.imag, z.real))
    z = z[order]
    vr = vr[:, order]

    norm_h = np.linalg.norm(matrix)
    resid = np.linalg.norm(matrix @ vr - vr * z[None, :])
    if norm_h > 0 and resid > 1e-10 * norm_h:
        raise NumericalFailureError(
            "eigendecomposition residual too large",
            diagnostics={"residual": float(resid), "norm": float(norm_h)})

    defective = False
    a_diag = np.empty(n)
    for k in range(n):
        v = vr[:, k]
        s = np.sum(v * v)
        if abs(s) < defect_tol:
            defective = True
            a_diag[k] = math.inf
            continue
        v = v / np.sqrt(s)
        i = int(np.argmax(np.abs(v)))
        if not (v[i].real > 0.0 or (v[i].real == 0.0 and v[i].imag > 0.0)):
            v = -v
        vr[:, k] = v
        a_diag[k] = float(np.sum(np.abs(v) ** 2))

    herm_sq = np.sum(np.abs(vr) ** 2, axis=0)
    rigidity = np.abs(np.einsum("ik,ik->k", vr, vr)) / herm_sq
    b_matrix = vr.conj().T @ vr
    np.fill_diagonal(b_matrix, a_diag)

    vr.setflags(write=False)
    z.setflags(write=False)
    return ResonanceSpectrum(energy=energy, eigenvalues=z, right_eigenvectors=vr,
                             a_diag=a_diag, b_matrix=b_matrix,
                             phase_rigidity=rigidity, defective=defective)


def _match_index(spectrum, seed_value=None, seed_vector=None, gap=_OVERLAP_GAP):
    """Index of the branch best matching a seed eigenvalue or eigenvector.

    Vector matching maximizes the bilinear overlap |seed^T phi|.  Overlap ties
    (within ``gap``) occur exactly when the step straddles a branch point,
    where any labelling is a convention; they are resolved deterministically
    in favour of the lowest canonical index.  Eigenvalue-only matching has no
    such convention available and raises on a tie instead.
    """
    if seed_vector is not None:
        score = np.abs(seed_vector @ spectrum.right_eigenvectors)
        best = float(np.max(score))
        tied = np.nonzero(score >= best - gap * max(1.0, best))[0]
        return int(tied[0])
    dist = np.abs(spectrum.eigenvalues - seed_value)
    best = int(np.argmin(dist))
    if dist.shape[0] > 1:
        second = np.partition(dist, 1)[1]
        if abs(second - dist[best]) < gap * max(1.0, float(np.abs(seed_value))):
            raise BranchAmbiguityError(
                f"two eigenvalue distances within {gap:g}; pass a seed vector")
    return best


def solve_fixed_point(model: SystemModel, branch_seed: complex,
                      tol_fp: float = DEFAULT_TOL_FP, *,
                      seed_vector=None, branch_id: int = -1,
                      defect_tol: float = DEFAULT_DEFECT_TOL,
                      max_iter: int = _MAX_FP_ITER) -> ResonanceState:
    """Damped fixed-point iteration for one resonance branch.

    ``branch_seed`` must be (close to) an eigenvalue of H_eff at the seed
    energy Re(branch_seed); the branch is anchored there either by eigenvalue
    proximity or, if ``seed_vector`` is given, by maximal bilinear eigenvector
    overlap, and then followed by overlap from iterate to iterate.  Hitting
    the iteration cap yields ``converged=False`` (not an exception); an
    ambiguous branch match raises :class:`BranchAmbiguityError`.
    """
    if tol_fp <= 0:
        raise InvalidInputError("tol_fp must be > 0")
    energy = float(np.real(branch_seed))
    tracker = seed_vector
    spectrum = diagonalize(build_h_eff(model, energy), defect_tol=defect_tol)
    idx = _match_index(spectrum, seed_value=branch_seed, seed_vector=tracker)
    tracker = spectrum.right_eigenvectors[:, idx]

    converged = False
    iterations = 0
    for _ in range(max_iter):
        z = spectrum.eigenvalues[idx]
        new_energy = (1.0 - _FP_ALPHA) * energy + _FP_ALPHA * float(z.real)
        iterations += 1
        if abs(new_energy - energy) <= tol_fp:
            energy = new_energy
            converged = True
            break
        energy = new_energy
        spectrum = diagonalize(build_h_eff(model, energy), defect_tol=defect_tol)
        idx = _match_index(spectrum, seed_vector=tracker)
        tracker = spectrum.right_eigenvectors[:, idx]

    # Final eigenpair evaluated at the returned energy.
    spectrum = diagonalize(build_h_eff(model, energy), defect_tol=defect_tol)
    idx = _match_index(spectrum, seed_vector=tracker)
    z = spectrum.eigenvalues[idx]
    return ResonanceState(branch_id=branch_id, e_lambda=energy,
                          gamma_lambda=float(-2.0 * z.imag),
                          eigvec=spectrum.right_eigenvectors[:, idx],
                          converged=converged, iterations=iterations,
                          a_lambda=float(spectrum.a_diag[idx]),
                          rigidity=float(spectrum.phase_rigidity[idx]),
                          eigenvalue=complex(z))


def _solve_all_branches(model, seeds, vectors, tol_fp, defect_tol, pool=None):
    """Fixed-point solve every branch; seeds/vectors are per-branch lists."""
    def solve(k):
        return solve_fixed_point(model, seeds[k], tol_fp, seed_vector=vectors[k],
                                 branch_id=k, defect_tol=defect_tol)
    n = len(seeds)
    if pool is None:
        return [solve(k) for k in range(n)]
    return list(pool.map(solve, range(n)))


def _repair_collisions(bound, states, tol_fp, defect_tol):
    """Re-split branch trackers that collapsed onto the same eigenpair.

    When two tracked branches tie onto one state (a branch-point crossing),
    the later one is re-solved from the orphaned partner slot of the shared
    spectrum, keeping the step total and deterministic.
    """
    n = len(states)
    for a in range(n):
        for b in range(a + 1, n):
            sa, sb = states[a], states[b]
            scale = max(1.0, abs(sa.eigenvalue))
            na = np.linalg.norm(sa.eigvec)
            nb = np.linalg.norm(sb.eigvec)
            same = (abs(sa.eigenvalue - sb.eigenvalue) < 1e-9 * scale
                    and np.abs(np.vdot(sa.eigvec, sb.eigvec)) / (na * nb) > 1.0 - 1e-9)
            if not same:
                continue
            spectrum = diagonalize(build_h_eff(bound, sa.e_lambda),
                                   defect_tol=defect_tol)
            taken = int(np.argmin(np.abs(spectrum.eigenvalues - sa.eigenvalue)))
            score = np.abs(sb.eigvec @ spectrum.right_eigenvectors)
            score[taken] = -1.0
            slot = int(np.argmax(score))
            states[b] = solve_fixed_point(
                bound, spectrum.eigenvalues[slot], tol_fp,
                seed_vector=spectrum.right_eigenvectors[:, slot],
                branch_id=sb.branch_id, defect_tol=defect_tol)
    return states


def _assign_branches(prev_vectors, states):
    """Optimal relabelling of new states against the previous vectors by
    maximal bilinear overlap.  A matched overlap below the continuity floor
    raises BranchAmbiguityError (the caller bisects the step)."""
    n = len(states)
    new_vectors = np.column_stack([s.eigvec for s in states])
    overlap = np.abs(prev_vectors.T @ new_vectors)
    rows, cols = linear_sum_assignment(-overlap)
    for i, j in zip(rows, cols):
        if overlap[i, j] < _MIN_OVERLAP:
            raise BranchAmbiguityError(
                f"branch {i}: best continuation overlap {overlap[i, j]:.3f} "
                f"< {_MIN_OVERLAP}")
    out = [None] * n
    for i, j in zip(rows, cols):
        out[i] = states[j]
    return out


def _advance(model, param, prev_states, x_prev, x_next, tol_fp, defect_tol,
             pool, depth=0):
    """One continuation step with automatic bisection on ambiguity."""
    bound = model.with_params(**{param: float(x_next)})
    seeds = [s.eigenvalue if np.isfinite(s.eigenvalue) else s.e_lambda
             for s in prev_states]
    vectors = [s.eigvec for s in prev_states]
    try:
        states = _solve_all_branches(bound, seeds, vectors, tol_fp, defect_tol, pool)
        states = _repair_collisions(bound, states, tol_fp, defect_tol)
        prev = np.column_stack(vectors)
        states = _assign_branches(prev, states)
        return [ResonanceState(branch_id=k, e_lambda=s.e_lambda,
                               gamma_lambda=s.gamma_lambda, eigvec=s.eigvec,
                               converged=s.converged, iterations=s.iterations,
                               a_lambda=s.a_lambda, rigidity=s.rigidity,
                               eigenvalue=s.eigenvalue)
                for k, s in enumerate(states)]
    except BranchAmbiguityError:
        if depth >= _MAX_REFINE:
            raise
        mid = 0.5 * (x_prev + x_next)
        mid_states = _advance(model, param, prev_states, x_prev, mid,
                              tol_fp, defect_tol, pool, depth + 1)
        return _advance(model, param, mid_states, mid, x_next,
                        tol_fp, defect_tol, pool, depth + 1)


def _initial_states(model, tol_fp, defect_tol, pool):
    """Branches at the first grid point, anchored to the closed-system states
    (H_B eigenpairs, ascending energy)."""
    mu, u = np.linalg.eigh(model.levels_hb)
    seeds = [complex(mu[k]) for k in range(model.nlevels)]
    vectors = [u[:, k].astype(complex) for k in range(model.nlevels)]
    states = _solve_all_branches(model, seeds, vectors, tol_fp, defect_tol, pool)
    states = _repair_collisions(model, states, tol_fp, defect_tol)
    return [ResonanceState(branch_id=k, e_lambda=s.e_lambda,
                           gamma_lambda=s.gamma_lambda, eigvec=s.eigvec,
                           converged=s.converged, iterations=s.iterations,
                           a_lambda=s.a_lambda, rigidity=s.rigidity,
                           eigenvalue=s.eigenvalue)
            for k, s in enumerate(states)]


def sweep(model: SystemModel, param: str, grid, *,
          tol_fp: float = DEFAULT_TOL_FP,
          defect_tol: float = DEFAULT_DEFECT_TOL,
          threads: int = 1) -> SweepResult:
    """Trace every resonance branch over a control-parameter grid.

    Branch identities are anchored to the closed-system eigenstates at the
    first grid point and continued by eigenvector overlap; ``threads`` > 1
    solves the independent per-branch fixed points of each grid point
    concurrently (bit-identical to the sequential order by construction).
    """
    if param not in model.control_params:
        raise InvalidInputError(f"'{param}' is not a declared control parameter")
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise InvalidInputError("grid must be one-dimensional with at least 2 points")
    steps = np.diff(grid)
    if not (np.all(steps > 0) or np.all(steps < 0)):
        raise InvalidInputError("grid must be strictly monotone")
    if threads < 1:
        raise InvalidInputError("threads must be >= 1")

    npts, nb = grid.size, model.nlevels
    e = np.empty((npts, nb))
    gam = np.empty((npts, nb))
    rig = np.empty((npts, nb))
    adiag = np.empty((npts, nb))
    conv = np.empty((npts, nb), dtype=bool)
    iters = np.empty((npts, nb), dtype=int)
    zs = np.empty((npts, nb), dtype=complex)
    vecs = np.empty((npts, nb, nb), dtype=complex)

    def record(i, states):
        for k, s in enumerate(states):
            e[i, k] = s.e_lambda
            gam[i, k] = s.gamma_lambda
            rig[i, k] = s.rigidity
            adiag[i, k] = s.a_lambda
            conv[i, k] = s.converged
            iters[i, k] = s.iterations
            zs[i, k] = s.eigenvalue
            vecs[i, k] = s.eigvec

    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        states = _initial_states(model.with_params(**{param: float(grid[0])}),
                                 tol_fp, defect_tol, pool)
        record(0, states)
        for i in range(1, npts):
            states = _advance(model, param, states, grid[i - 1], grid[i],
                              tol_fp, defect_tol, pool)
            record(i, states)
    finally:
        if pool is not None:
            pool.shutdown()

    return SweepResult(model=model, param=param, grid=grid, e_lambda=e,
                       gamma_lambda=gam, rigidity=rig, a_diag=adiag,
                       converged=conv, eigenvalues=zs, eigvecs=vecs,
                       iterations=iters)


def _pair_at(model, param, x, anchor_state_i, anchor_state_j, tol_fp, defect_tol):
    """Eigenvalue pair (and rigidities/vectors) tracked to parameter x.

    Solves the fixed point for branch i only and reads branch j off the same
    final spectrum (the pair shares an energy near a coalescence), which keeps
    the probe well-defined arbitrarily close to the exceptional point.
    """
    bound = model.with_params(**{param: float(x)})
    state = solve_fixed_point(bound, anchor_state_i.eigenvalue, tol_fp,
                              seed_vector=anchor_state_i.eigvec,
                              defect_tol=defect_tol)
    spectrum = diagonalize(build_h_eff(bound, state.e_lambda), defect_tol=defect_tol)
    zi = int(np.argmin(np.abs(spectrum.eigenvalues - state.eigenvalue)))
    score = np.abs(anchor_state_j.eigvec @ spectrum.right_eigenvectors)
    score[zi] = -1.0
    zj = int(np.argmax(score))
    return spectrum, zi, zj


def find_exceptional_points(sweep_result: SweepResult,
                            sep_tol: float = DEFAULT_SEP_TOL,
                            rig_tol: float = DEFAULT_RIG_TOL, *,
                            tol_fp: float = DEFAULT_TOL_FP,
                            defect_tol: float = DEFAULT_DEFECT_TOL,
                            xatol: float = 1e-9) -> list:
    """Locate exceptional points from the branch trajectories of a sweep.

    Every interior local minimum of a pairwise eigenvalue separation is
    refined by bounded golden-section minimization within its bracketing grid
    interval; the refined point is kept only if the separation drops below
    ``sep_tol`` AND the smaller phase rigidity of the pair drops below
    ``rig_tol`` (a real level crossing of a Hermitian spectrum keeps r = 1 and
    is therefore rejected).  Returns an empty list when nothing qualifies.
    """
    if sweep_result.grid.size < 3:
        raise InvalidInputError("need at least 3 grid points to bracket a minimum")
    model, param = sweep_result.model, sweep_result.param
    grid, zs = sweep_result.grid, sweep_result.eigenvalues
    found = []
    nb = sweep_result.nbranches
    for bi in range(nb):
        for bj in range(bi + 1, nb):
            sep = np.abs(zs[:, bi] - zs[:, bj])
            for k in range(1, grid.size - 1):
                if not (sep[k] <= sep[k - 1] and sep[k] <= sep[k + 1]):
                    continue
                lo, hi = float(grid[k - 1]), float(grid[k + 1])
                anchor_i = _state_from_sweep(sweep_result, k, bi)
                anchor_j = _state_from_sweep(sweep_result, k, bj)

                def separation(x):
                    spectrum, zi, zj = _pair_at(model, param, x, anchor_i,
                                                anchor_j, tol_fp, defect_tol)
                    return float(np.abs(spectrum.eigenvalues[zi]
                                        - spectrum.eigenvalues[zj]))

                res = minimize_scalar(separation, bounds=(lo, hi),
                                      method="bounded",
                                      options={"xatol": xatol})
                x_star = float(res.x)
                spectrum, zi, zj = _pair_at(model, param, x_star, anchor_i,
                                            anchor_j, tol_fp, defect_tol)
                z_pair = spectrum.eigenvalues[[zi, zj]]
                min_sep = float(np.abs(z_pair[0] - z_pair[1]))
                min_rig = float(min(spectrum.phase_rigidity[zi],
                                    spectrum.phase_rigidity[zj]))
                if min_sep < sep_tol and min_rig < rig_tol:
                    u = spectrum.right_eigenvectors[:, zi]
                    v = spectrum.right_eigenvectors[:, zj]
                    u = u / np.linalg.norm(u)
                    v = v / np.linalg.norm(v)
                    defect = float(min(np.linalg.norm(u - 1j * v),
                                       np.linalg.norm(u + 1j * v)))
                    found.append(ExceptionalPoint(
                        param_value=x_star,
                        energy_value=complex(z_pair.mean()),
                        branch_pair=(bi, bj),
                        min_separation=min_sep,
                        min_rigidity=min_rig,
                        bracket=(lo, hi),
                        coalescence_defect=defect))
    found.sort(key=lambda ep: ep.param_value)
    return found


def _state_from_sweep(sw: SweepResult, i: int, k: int) -> ResonanceState:
    return ResonanceState(branch_id=k, e_lambda=float(sw.e_lambda[i, k]),
                          gamma_lambda=float(sw.gamma_lambda[i, k]),
                          eigvec=sw.eigvecs[i, k],
                          converged=bool(sw.converged[i, k]),
                          iterations=int(sw.iterations[i, k]),
                          a_lambda=float(sw.a_diag[i, k]),
                          rigidity=float(sw.rigidity[i, k]),
                          eigenvalue=complex(sw.eigenvalues[i, k]))
