"""Command-line front end: model ingestion, pipeline orchestration and
deterministic artifact emission.

Every run writes its primary table(s) as CSV with fixed 17-significant-digit
scientific formatting (byte-identical regardless of --threads) plus a
``run_manifest.json`` echoing the configuration, library version, wall time
and the pass/fail summary of the invariant checks applicable to the command.

Exit codes: 0 success, 1 input error, 2 invariant-check failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bic import find_bics, verify_bic
from .dynamics import decay_rate, evolve
from .errors import InternalConsistencyError, ResonanceLabError
from .model import build_h_eff, expected_width_sum
from .modelfile import load_model
from .oracle import build_full, survival_probability
from .scattering import scattering_point
from .spectral import (DEFAULT_RIG_TOL, DEFAULT_SEP_TOL, DEFAULT_TOL_FP,
                       diagonalize, find_exceptional_points, solve_fixed_point,
                       sweep)
from .bic import DEFAULT_WIDTH_TOL

__all__ = ["RunConfig", "run", "main"]

_COMMANDS = ("spectrum", "sweep", "scan", "trace", "bic", "oracle")


def _fmt(x) -> str:
    """17 significant digits, scientific: deterministic and lossless."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.16e" % float(x)


def _write_csv(path: Path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


@dataclass
class RunConfig:
    """Everything one CLI invocation needs; grids are (start, stop, count)."""

    command: str
    model_path: str
    output_dir: str
    param: str = ""
    param_grid: tuple = ()
    energy: float = math.nan
    energy_grid: tuple = ()
    time_grid: tuple = ()
    channel: int = 0
    init_level: int = 0
    bins: int = 2000
    window: tuple = ()
    tol_fp: float = DEFAULT_TOL_FP
    width_tol: float = DEFAULT_WIDTH_TOL
    sep_tol: float = DEFAULT_SEP_TOL
    rig_tol: float = DEFAULT_RIG_TOL
    threads: int = 1
    seed: int = 0

    def validate(self):
        if self.command not in _COMMANDS:
            raise ResonanceLabError(f"unknown command {self.command!r}")
        for name in ("tol_fp", "width_tol", "sep_tol", "rig_tol"):
            if getattr(self, name) <= 0:
                raise ResonanceLabError(f"{name} must be > 0")
        if self.threads < 1:
            raise ResonanceLabError("threads must be >= 1")
        for label, grid in (("param", self.param_grid),
                            ("energy", self.energy_grid),
                            ("time", self.time_grid)):
            if grid and int(grid[2]) < 2:
                raise ResonanceLabError(f"{label} grid needs count >= 2")


def _grid(spec3):
    start, stop, count = spec3
    return np.linspace(float(start), float(stop), int(count))


def _manifest(outdir, config, invariants, wall, status):
    payload = {
        "command": config.command,
        "version": __version__,
        "config": asdict(config),
        "wall_time_s": wall,
        "invariants": invariants,
        "status": status,
    }
    with open(Path(outdir) / "run_manifest.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, default=str)
        fh.write("\n")


def _spectrum_invariants(spec):
    phi = spec.right_eigenvectors
    orth = float(np.max(np.abs(phi.T @ phi - np.eye(spec.nlevels)))) \
        if not spec.defective else math.nan
    finite_a = spec.a_diag[np.isfinite(spec.a_diag)]
    return {
        "biorth_residual": orth,
        "biorth_ok": bool(not spec.defective and orth <= 1e-10),
        "min_a_minus_1": float(np.min(finite_a) - 1.0) if finite_a.size else 0.0,
        "a_ok": bool(np.all(finite_a >= 1.0 - 1e-12)),
        "rigidity_ok": bool(np.all((spec.phase_rigidity > 0)
                                   & (spec.phase_rigidity <= 1 + 1e-12))),
        "widths_nonnegative": bool(np.all(spec.widths >= -1e-12)),
        "defective": bool(spec.defective),
    }


def _cmd_spectrum(model, config, outdir):
    mu = np.linalg.eigh(model.levels_hb)[0]
    rows = []
    inv = {"converged": True}
    worst = _spectrum_invariants(diagonalize(build_h_eff(model, float(mu[0]))))
    for k in range(model.nlevels):
        st = solve_fixed_point(model, complex(mu[k]), config.tol_fp,
                               seed_vector=np.linalg.eigh(model.levels_hb)[1][:, k].astype(complex),
                               branch_id=k)
        rows.append((k, st.e_lambda, st.gamma_lambda, st.rigidity, st.a_lambda,
                     st.converged, st.iterations))
        inv["converged"] = inv["converged"] and bool(st.converged)
    _write_csv(outdir / "resonances.csv",
               ["branch_id", "E_lambda", "Gamma_lambda", "r_lambda", "A_lambda",
                "converged", "iterations"], rows)
    inv.update(worst)
    inv["pass"] = bool(inv["converged"] and inv["a_ok"] and inv["rigidity_ok"]
                       and inv["widths_nonnegative"])
    return inv


def _cmd_sweep(model, config, outdir):
    grid = _grid(config.param_grid)
    sw = sweep(model, config.param, grid, tol_fp=config.tol_fp,
               threads=config.threads)
    rows = []
    for i, g in enumerate(sw.grid):
        for b in range(sw.nbranches):
            rows.append((g, b, sw.e_lambda[i, b], sw.gamma_lambda[i, b],
                         sw.rigidity[i, b], sw.a_diag[i, b], sw.converged[i, b]))
    _write_csv(outdir / "trajectories.csv",
               ["param", "branch_id", "E_lambda", "Gamma_lambda", "r_lambda",
                "A_lambda", "converged"], rows)

    eps = find_exceptional_points(sw, config.sep_tol, config.rig_tol,
                                  tol_fp=config.tol_fp)
    ep_payload = {"param": config.param, "exceptional_points": [
        {"param_value": _fmt(ep.param_value),
         "energy_re": _fmt(ep.energy_value.real),
         "energy_im": _fmt(ep.energy_value.imag),
         "branch_pair": list(ep.branch_pair),
         "min_separation": _fmt(ep.min_separation),
         "min_rigidity": _fmt(ep.min_rigidity),
         "bracket": [_fmt(ep.bracket[0]), _fmt(ep.bracket[1])],
         "coalescence_defect": _fmt(ep.coalescence_defect)} for ep in eps]}
    with open(outdir / "exceptional_points.json", "w", encoding="utf-8") as fh:
        json.dump(ep_payload, fh, indent=2)
        fh.write("\n")

    inv = {"all_converged": bool(np.all(sw.converged)),
           "widths_nonnegative": bool(np.all(sw.gamma_lambda >= -1e-12)),
           "n_exceptional_points": len(eps)}
    per_g_expected = []
    for g in sw.grid:
        bound = model.with_params(**{config.param: float(g)})
        per_g_expected.append(expected_width_sum(bound))
    if all(v is not None for v in per_g_expected):
        got = sw.gamma_lambda.sum(axis=1)
        want = np.array(per_g_expected)
        denom = np.maximum(np.abs(want), 1e-300)
        rel = float(np.max(np.abs(got - want) / denom))
        inv["width_sum_rel_error"] = rel
        inv["width_sum_ok"] = bool(rel <= 1e-9)
    else:
        inv["width_sum_ok"] = None  # sharp-band model: trace rule not applicable
    inv["pass"] = bool(inv["all_converged"] and inv["widths_nonnegative"]
                       and inv.get("width_sum_ok") is not False)
    return inv


def _cmd_scan(model, config, outdir):
    energies = _grid(config.energy_grid)

    def point(e):
        return scattering_point(model, float(e), incident_channel=config.channel)

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            points = list(pool.map(point, energies))
    else:
        points = [point(e) for e in energies]

    nch = model.nchannels
    header = ["energy"]
    pairs = [(i, j) for i in range(nch) for j in range(nch)]
    for i, j in pairs:
        header += [f"S2_{i}_{j}", f"argS_{i}_{j}"]
    tpairs = [(i, j) for i in range(nch) for j in range(nch) if i != j]
    for i, j in tpairs:
        header += [f"t2_{i}_{j}"]
    header += ["rho", "theta"]

    rows = []
    max_resid = 0.0
    for p in points:
        row = [p.energy]
        block = {c: k for k, c in enumerate(p.open_channels)}
        for i, j in pairs:
            if i in block and j in block:
                s = p.s_full[block[i], block[j]]
                row += [abs(s) ** 2, math.atan2(s.imag, s.real)]
            else:
                row += [0.0, 0.0]
        for i, j in tpairs:
            t = p.transmission.get((i, j))
            row += [abs(t) ** 2 if t is not None else 0.0]
        row += [p.rho, p.theta]
        rows.append(row)
        max_resid = max(max_resid, p.unitarity_residual)
    _write_csv(outdir / "scan.csv", header, rows)
    inv = {"max_unitarity_residual": max_resid,
           "unitarity_ok": bool(max_resid <= 1e-8)}
    inv["pass"] = inv["unitarity_ok"]
    return inv


def _cmd_trace(model, config, outdir):
    e = float(config.energy)
    spec = diagonalize(build_h_eff(model, e))
    from .scattering import c_coefficients
    c0 = c_coefficients(model, spec, e, config.channel)
    times = _grid(config.time_grid)
    if times[0] != 0.0:
        raise ResonanceLabError("trace time grid must start at 0")
    trace = evolve(spec, e, c0, times)
    decay_rate(trace)  # raises on analytic/numeric disagreement
    rows = [(t, p.real, p.imag, abs(p) ** 2, ka, kn)
            for t, p, ka, kn in zip(trace.times, trace.population,
                                    trace.rate, trace.rate_numeric)]
    _write_csv(outdir / "trace.csv",
               ["t", "re_population", "im_population", "population2",
                "k_analytic", "k_numeric"], rows)
    scale = max(float(np.max(np.abs(trace.rate))), 1e-30)
    mism = float(np.max(np.abs(trace.rate - trace.rate_numeric))) / scale
    inv = {"rate_agreement_rel": mism, "rate_ok": bool(mism <= 1e-6),
           "truncated": bool(trace.truncated)}
    inv["pass"] = inv["rate_ok"]
    return inv


def _cmd_bic(model, config, outdir):
    grid = _grid(config.param_grid)
    sw = sweep(model, config.param, grid, tol_fp=config.tol_fp,
               threads=config.threads)
    candidates = find_bics(sw, config.width_tol, tol_fp=config.tol_fp)
    rows = [(c.param_value, c.branch_id, c.energy, c.width_at_min,
             c.true_bic, c.partner_branch, c.partner_width,
             float(np.max(c.decoupling_residuals)), c.width_bound_margin)
            for c in candidates]
    _write_csv(outdir / "bic_candidates.csv",
               ["param_value", "branch_id", "energy", "width_at_min",
                "true_bic", "partner_branch", "partner_width",
                "max_decoupling_residual", "width_bound_margin"], rows)
    reports = []
    all_pass = True
    for c in candidates:
        if not c.true_bic:
            continue
        rep = verify_bic(c, model, tol_fp=config.tol_fp)
        reports.append(rep.as_text())
        all_pass = all_pass and rep.passed
    with open(outdir / "bic_report.txt", "w", encoding="utf-8") as fh:
        fh.write(f"candidates: {len(candidates)} "
                 f"(true BICs: {sum(c.true_bic for c in candidates)})\n\n")
        fh.write("\n\n".join(reports) + ("\n" if reports else ""))
    inv = {"n_candidates": len(candidates),
           "n_true_bics": int(sum(c.true_bic for c in candidates)),
           "verifications_pass": bool(all_pass),
           "width_bound_ok": bool(all(c.width_bound_margin >= -1e-10
                                      for c in candidates))}
    inv["pass"] = bool(all_pass and inv["width_bound_ok"])
    return inv


def _cmd_oracle(model, config, outdir):
    window = tuple(config.window) if config.window else None
    full = build_full(model, config.bins, window=window)
    times = _grid(config.time_grid)
    init = np.zeros(model.nlevels)
    init[config.init_level] = 1.0
    res = survival_probability(full, init, times)
    rows = [(t, p, a.real, a.imag, q)
            for t, p, a, q in zip(res.times, res.probability, res.amplitude,
                                  res.q_weight)]
    _write_csv(outdir / "survival.csv",
               ["t", "survival_prob", "re_amplitude", "im_amplitude",
                "q_weight"], rows)
    weight_err = 0.0
    for c, (chan, w) in enumerate(zip(model.channels, full.bin_weights)):
        total = float(np.sum(w ** 2))
        if np.isfinite(chan.threshold) and np.isfinite(chan.band_top):
            if chan.kind.value == "chain_lead":
                band_integral = 1.0
            else:
                band_integral = chan.dos_scale * (chan.band_top - chan.threshold)
            weight_err = max(weight_err, abs(total - band_integral))
    inv = {"dim": full.dim, "recurrence_time": full.recurrence_time,
           "recurrence_warning": bool(res.recurrence_warning),
           "bin_weight_error": weight_err,
           "bin_weights_ok": bool(weight_err <= 1e-6)}
    inv["pass"] = inv["bin_weights_ok"]
    return inv


_DISPATCH = {"spectrum": _cmd_spectrum, "sweep": _cmd_sweep, "scan": _cmd_scan,
             "trace": _cmd_trace, "bic": _cmd_bic, "oracle": _cmd_oracle}


def run(config: RunConfig) -> int:
    """Execute one configured command; returns the process exit status."""
    t0 = time.perf_counter()
    config.validate()
    outdir = Path(config.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        model = load_model(config.model_path)
        invariants = _DISPATCH[config.command](model, config, outdir)
    except InternalConsistencyError as exc:
        _manifest(outdir, config, {"error": str(exc), "code": exc.code},
                  time.perf_counter() - t0, "invariant-failure")
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return 2
    except ResonanceLabError as exc:
        _manifest(outdir, config, {"error": str(exc), "code": exc.code},
                  time.perf_counter() - t0, "input-error")
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return 1
    status = "ok" if invariants.get("pass", True) else "invariant-failure"
    _manifest(outdir, config, invariants, time.perf_counter() - t0, status)
    return 0 if status == "ok" else 2


def _build_parser():
    p = argparse.ArgumentParser(
        prog="resonance-lab",
        description="Resonances, exceptional points and bound states in the "
                    "continuum of open quantum systems")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--model", required=True, help="model definition file")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--threads", type=int,
                        default=int(os.environ.get("RESONANCE_LAB_THREADS", "1")))
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--tol-fp", type=float, default=DEFAULT_TOL_FP)
        sp.add_argument("--width-tol", type=float, default=DEFAULT_WIDTH_TOL)
        sp.add_argument("--sep-tol", type=float, default=DEFAULT_SEP_TOL)
        sp.add_argument("--rig-tol", type=float, default=DEFAULT_RIG_TOL)

    sp = sub.add_parser("spectrum", help="fixed-point resonances of all branches")
    common(sp)

    for name in ("sweep", "bic"):
        sp = sub.add_parser(name, help=f"{name} over a control parameter")
        common(sp)
        sp.add_argument("--param", required=True)
        sp.add_argument("--from", dest="start", type=float, required=True)
        sp.add_argument("--to", dest="stop", type=float, required=True)
        sp.add_argument("--steps", type=int, required=True)

    sp = sub.add_parser("scan", help="S matrix / transmission over an energy grid")
    common(sp)
    sp.add_argument("--energy-from", type=float, required=True)
    sp.add_argument("--energy-to", type=float, required=True)
    sp.add_argument("--energy-steps", type=int, required=True)
    sp.add_argument("--channel", type=int, default=0,
                    help="incident channel for rho/theta")

    sp = sub.add_parser("trace", help="time-domain population and decay rate")
    common(sp)
    sp.add_argument("--energy", type=float, required=True)
    sp.add_argument("--channel", type=int, default=0)
    sp.add_argument("--t-to", type=float, required=True)
    sp.add_argument("--t-steps", type=int, required=True)

    sp = sub.add_parser("oracle", help="discretized full-space survival trace")
    common(sp)
    sp.add_argument("--bins", type=int, default=2000)
    sp.add_argument("--t-to", type=float, required=True)
    sp.add_argument("--t-steps", type=int, required=True)
    sp.add_argument("--window", type=float, nargs=2, metavar=("LO", "HI"),
                    help="truncation window for WIDEBAND channels")
    sp.add_argument("--init-level", type=int, default=0)
    return p


def _config_from_args(args) -> RunConfig:
    cfg = RunConfig(command=args.command, model_path=args.model,
                    output_dir=args.out, threads=args.threads, seed=args.seed,
                    tol_fp=args.tol_fp, width_tol=args.width_tol,
                    sep_tol=args.sep_tol, rig_tol=args.rig_tol)
    if args.command in ("sweep", "bic"):
        cfg.param = args.param
        cfg.param_grid = (args.start, args.stop, args.steps)
    elif args.command == "scan":
        cfg.energy_grid = (args.energy_from, args.energy_to, args.energy_steps)
        cfg.channel = args.channel
    elif args.command == "trace":
        cfg.energy = args.energy
        cfg.channel = args.channel
        cfg.time_grid = (0.0, args.t_to, args.t_steps)
    elif args.command == "oracle":
        cfg.bins = args.bins
        cfg.time_grid = (0.0, args.t_to, args.t_steps)
        cfg.window = tuple(args.window) if args.window else ()
        cfg.init_level = args.init_level
    return cfg


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return run(_config_from_args(args))
    except ResonanceLabError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
