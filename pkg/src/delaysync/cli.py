"""Command-line interface.

Subcommands
-----------
bif-point     locate and classify bifurcations of a harmonic coupling
crit-map      criticality map over an (r, s) grid
phase-sweep   pseudocontinuation sweep of the phase-difference flow
engineer      fit the delayed polynomial coupling for a two-harmonic target
simulate      integrate the coupled pair at one (K, tau) point
tau-sweep     bidirectional sweep of the common delay, with bistability report
param-map     two-parameter (K, tau) attractor map
feedback-sim  delayed mean-field feedback run

Grid arguments use the syntax lo:hi:count (inclusive endpoints); tau
grids may carry a trailing T on a bound (e.g. 0:0.5T:41) meaning
multiples of the engineered cycle's period.  Every run writes its data
files plus a manifest_<command>.json echoing the resolved configuration
(the manifest includes wall time and is the only non-reproducible
output; data files are byte-identical across reruns with the same
seed).  Exit codes: 0 success, 2 configuration error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, branch_tracker, brusselator, dde, phase_model, phase_sweep


class ConfigError(ValueError):
    pass


def _parse_grid(spec, period=None):
    """Parse lo:hi:count; bounds may end in T (needs ``period``)."""
    parts = spec.split(":")
    if len(parts) != 3:
        raise ConfigError(f"grid '{spec}' is not of the form lo:hi:count")

    def bound(sval):
        sval = sval.strip()
        if sval.endswith(("T", "t")):
            if period is None:
                raise ConfigError(f"bound '{sval}' uses T but no period is defined")
            return float(sval[:-1] or 1.0) * period
        return float(sval)

    lo, hi = bound(parts[0]), bound(parts[1])
    try:
        count = int(parts[2])
    except ValueError as e:
        raise ConfigError(f"grid count '{parts[2]}' is not an integer") from e
    if count < 1:
        raise ConfigError("grid count must be >= 1")
    return np.linspace(lo, hi, count)


def _load_config(args, parser):
    """Merge --config JSON (if given) under the command-line values.

    Unknown keys in the file are rejected.  Command-line flags that were
    explicitly provided win over file values.
    """
    if not args.config:
        return args
    path = Path(args.config)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}: invalid JSON ({e.msg})") from e
    known = set(vars(args))
    for key, value in data.items():
        dest = key.replace("-", "_")
        if dest not in known:
            raise ConfigError(f"{path}: unknown config key '{key}'")
        if f"--{key.replace('_', '-')}" not in sys.argv and dest != "config":
            setattr(args, dest, value)
    return args


def _outdir(args):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out, command, args, outputs, t_start):
    params = {
        k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config")
    }
    manifest = {
        "toolkit_version": __version__,
        "command": command,
        "parameters": params,
        "seed": getattr(args, "seed", None),
        "wall_time_s": time.monotonic() - t_start,
        "outputs": [str(p) for p in outputs],
    }
    path = out / f"manifest_{command}.json"
    path.write_text(json.dumps(manifest, indent=2, default=str) + "\n")


def _coupling_from_args(args):
    if args.harmonics:
        entries = json.loads(args.harmonics)
        return phase_model.coupling_from_json(json.dumps(entries))
    return phase_model.HarmonicCoupling.from_rs(
        args.r, args.s, args.gamma2, args.gamma3
    )


def _add_common(sub):
    sub.add_argument("--out-dir", default=".", help="output directory")
    sub.add_argument("--seed", type=int, default=0, help="RNG seed")
    sub.add_argument("--jobs", type=int, default=1, help="worker processes")
    sub.add_argument("--config", default=None, help="JSON config file")


def _add_phase_coupling(sub):
    sub.add_argument("--harmonics", default=None,
                     help='JSON list [{"m":1,"a":1.0,"gamma":0.0}, ...]')
    sub.add_argument("--r", type=float, default=0.0, help="second-harmonic amplitude")
    sub.add_argument("--s", type=float, default=0.0, help="third-harmonic amplitude")
    sub.add_argument("--gamma2", type=float, default=0.0)
    sub.add_argument("--gamma3", type=float, default=0.0)


def _engineered(args):
    """Limit cycle, PRC, and coupling, fit fresh or loaded from a file."""
    p = brusselator.BrusselatorParams(A=args.A, B=args.B)
    lc = brusselator.find_limit_cycle(p)
    if getattr(args, "coupling", None):
        coupling = brusselator.EngineeredCoupling.from_json(
            Path(args.coupling).read_text()
        )
        return p, lc, None, coupling
    Z = brusselator.compute_prc(lc, p)
    target = brusselator.HmmTarget(r=args.target_r, tau=0.0)
    coupling = brusselator.engineer_coupling(Z, lc, target)
    return p, lc, Z, coupling


def cmd_bif_point(args):
    out = _outdir(args)
    t0 = time.monotonic()
    c = _coupling_from_args(args)
    base = 0.0 if args.base in ("0", 0, 0.0) else math.pi
    alpha = phase_model.nearest_bifurcation(c, base)
    if alpha is None:
        raise ConfigError("no bifurcation found in (0, pi) for this coupling")
    cls = phase_model.classify_criticality(c, base, alpha, tol_c=args.tol_c)
    print(f"alpha_star = {alpha!r}")
    print(f"tag = {cls.tag.value}  (d1 = {cls.d1:.3e}, d3 = {cls.d3!r})")
    path = out / "bif_point.json"
    path.write_text(cls.to_json() + "\n")
    _write_manifest(out, "bif-point", args, [path], t0)
    return 0


def cmd_crit_map(args):
    out = _outdir(args)
    t0 = time.monotonic()
    r_grid = _parse_grid(args.r_grid)
    s_grid = _parse_grid(args.s_grid)
    cmap = phase_sweep.criticality_map(args.gamma2, args.gamma3, r_grid, s_grid,
                                       tol_c=args.tol_c)
    path = out / "crit_map.csv"
    phase_sweep.map_to_csv(path, cmap)
    print(f"wrote {path} ({len(r_grid)}x{len(s_grid)} cells)")
    _write_manifest(out, "crit-map", args, [path], t0)
    return 0


def cmd_phase_sweep(args):
    out = _outdir(args)
    t0 = time.monotonic()
    c = _coupling_from_args(args)
    grid = _parse_grid(args.alpha_grid)
    proto = phase_sweep.SweepProtocol(
        alpha_grid=grid,
        settle_time=args.settle_time,
        perturbation_scale=args.perturbation,
        rng_seed=args.seed,
        integrator_step=args.step,
    )
    asc = phase_sweep.pseudocontinuation_sweep(c, proto, args.psi_init)
    proto_desc = phase_sweep.SweepProtocol(
        alpha_grid=grid[::-1].copy(),
        settle_time=args.settle_time,
        perturbation_scale=args.perturbation,
        rng_seed=args.seed + 1,
        integrator_step=args.step,
    )
    desc = phase_sweep.pseudocontinuation_sweep(c, proto_desc, asc[-1][1])
    path = out / "phase_sweep.csv"
    phase_sweep.sweep_to_csv(path, asc, desc)
    print(f"wrote {path} ({len(grid)} points per direction)")
    _write_manifest(out, "phase-sweep", args, [path], t0)
    return 0


def cmd_engineer(args):
    out = _outdir(args)
    t0 = time.monotonic()
    p = brusselator.BrusselatorParams(A=args.A, B=args.B)
    lc = brusselator.find_limit_cycle(p)
    Z = brusselator.compute_prc(lc, p)
    target = brusselator.HmmTarget(r=args.target_r, tau=0.0)
    coupling = brusselator.engineer_coupling(Z, lc, target)
    dtheta, realized = brusselator.validate_interaction(Z, lc, coupling)
    path_c = out / "coupling.json"
    path_c.write_text(coupling.to_json() + "\n")
    path_g = out / "realized_interaction.csv"
    with open(path_g, "w") as fh:
        fh.write("dtheta,realized,target\n")
        for th, g in zip(dtheta, realized):
            fh.write(f"{th!r},{g!r},{target(th)!r}\n")
    err = np.sqrt(np.mean((realized - target(dtheta)) ** 2))
    print(f"period = {lc.period!r}")
    print(f"coupling: k1={coupling.k1!r} tau1={coupling.tau1!r} "
          f"k2={coupling.k2!r} tau2={coupling.tau2!r}")
    print(f"realized-interaction RMS mismatch = {err:.3e}")
    _write_manifest(out, "engineer", args, [path_c, path_g], t0)
    return 0


def cmd_simulate(args):
    out = _outdir(args)
    t0 = time.monotonic()
    p, lc, _, coupling = _engineered(args)
    tau = args.tau * lc.period if args.tau_in_periods else args.tau
    coupling = coupling.with_strength(K=args.K, tau=tau)
    sys_ = brusselator.make_coupled_system(p, coupling)
    hist = _paired_history(lc, args.ic_alpha)
    t_end = args.periods * lc.period
    traj = dde.integrate_dde(
        sys_, hist, t_end, lc.period / args.steps_per_period,
        record_last=min(t_end, args.record_periods * lc.period),
    )
    path_t = out / "trajectory.csv"
    traj.to_csv(path_t, downsample=args.downsample,
                header="t,x_1,y_1,x_2,y_2")
    outputs = [path_t]
    try:
        stats = dde.summarize(traj, 0, 2, window=0.5)
        path_s = out / "summary.json"
        path_s.write_text(stats.to_json() + "\n")
        outputs.append(path_s)
        print(f"psi = {stats.psi:.4f}  period = {stats.period:.4f}  "
              f"dA_rel = {stats.dA_relative:.4f}")
    except (dde.NoPeaks, dde.NotLocked) as e:
        print(f"not locked: {e}")
    print(f"wrote {path_t}")
    _write_manifest(out, "simulate", args, outputs, t0)
    return 0


def _paired_history(lc, alpha):
    h1 = brusselator.fourier_shift(lc, 0.0)
    h2 = brusselator.fourier_shift(lc, alpha)

    def hist(t):
        a = h1(t)
        b = h2(t)
        return np.array([a[0], a[1], b[0], b[1]])

    return hist


def cmd_tau_sweep(args):
    out = _outdir(args)
    t0 = time.monotonic()
    p, lc, _, coupling = _engineered(args)
    grid = _parse_grid(args.tau_grid, period=lc.period)
    fwd = branch_tracker.tau_sweep(
        p, lc, coupling, args.K, grid,
        direction=branch_tracker.Direction.FORWARD,
        settle_periods=args.settle_periods, measure_periods=args.measure_periods,
        rng_seed=args.seed,
    )
    bwd = branch_tracker.tau_sweep(
        p, lc, coupling, args.K, grid,
        direction=branch_tracker.Direction.BACKWARD,
        settle_periods=args.settle_periods, measure_periods=args.measure_periods,
        rng_seed=args.seed + 1,
    )
    report = branch_tracker.detect_bistability(fwd, bwd, threshold=args.threshold)
    path_s = out / "tau_sweep.csv"
    branch_tracker.sweep_to_csv(path_s, fwd + bwd, lc.period)
    path_b = out / "bistability.json"
    path_b.write_text(report.to_json() + "\n")
    n = len(report.intervals)
    print(f"wrote {path_s}; {n} bistable interval(s)")
    _write_manifest(out, "tau-sweep", args, [path_s, path_b], t0)
    return 0


def cmd_param_map(args):
    out = _outdir(args)
    t0 = time.monotonic()
    p, lc, _, coupling = _engineered(args)
    K_grid = _parse_grid(args.K_grid)
    tau_grid = _parse_grid(args.tau_grid, period=lc.period)
    ics = [float(v) for v in args.ic_alphas.split(",")]
    pmap = branch_tracker.two_param_map(
        p, lc, coupling, K_grid, tau_grid, ic_alphas=ics,
        settle_periods=args.settle_periods, measure_periods=args.measure_periods,
        jobs=args.jobs,
    )
    path = out / "param_map.csv"
    branch_tracker.param_map_to_csv(path, pmap, lc.period)
    print(f"wrote {path} ({len(K_grid)}x{len(tau_grid)} cells)")
    _write_manifest(out, "param-map", args, [path], t0)
    return 0


def cmd_feedback_sim(args):
    out = _outdir(args)
    t0 = time.monotonic()
    p = brusselator.BrusselatorParams(A=args.A, B=args.B)
    lc = brusselator.find_limit_cycle(p)
    tau = args.tau * lc.period if args.tau_in_periods else args.tau
    traj = branch_tracker.mean_field_feedback_sim(
        p, lc, args.K, tau, args.periods * lc.period,
        window_periods=args.window_periods, ic_alpha=args.ic_alpha,
        record_last=args.record_periods * lc.period,
    )
    path_t = out / "feedback_trajectory.csv"
    traj.to_csv(path_t, downsample=args.downsample,
                header="t,x_1,y_1,x_2,y_2,mean")
    outputs = [path_t]
    try:
        stats = dde.summarize(traj, 0, 2, window=0.5)
        path_s = out / "feedback_summary.json"
        path_s.write_text(stats.to_json() + "\n")
        outputs.append(path_s)
        print(f"psi = {stats.psi:.4f}  period = {stats.period:.4f}")
    except (dde.NoPeaks, dde.NotLocked) as e:
        print(f"not locked: {e}")
    print(f"wrote {path_t}")
    _write_manifest(out, "feedback-sim", args, outputs, t0)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="delaysync",
        description="Synchronization transitions in two delay-coupled oscillators",
    )
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    sp = subs.add_parser("bif-point", help="locate and classify one bifurcation")
    _add_common(sp)
    _add_phase_coupling(sp)
    sp.add_argument("--base", default="0", choices=["0", "pi"],
                    help="equilibrium to analyze")
    sp.add_argument("--tol-c", type=float, default=1e-9, dest="tol_c")
    sp.set_defaults(func=cmd_bif_point)

    sp = subs.add_parser("crit-map", help="criticality map over an (r, s) grid")
    _add_common(sp)
    sp.add_argument("--gamma2", type=float, default=0.0)
    sp.add_argument("--gamma3", type=float, default=0.0)
    sp.add_argument("--r", dest="r_grid", default="-0.3:0.3:61",
                    help="r grid lo:hi:count")
    sp.add_argument("--s", dest="s_grid", default="-0.3:0.3:61",
                    help="s grid lo:hi:count")
    sp.add_argument("--tol-c", type=float, default=1e-9, dest="tol_c")
    sp.set_defaults(func=cmd_crit_map)

    sp = subs.add_parser("phase-sweep", help="pseudocontinuation sweep in alpha")
    _add_common(sp)
    _add_phase_coupling(sp)
    sp.add_argument("--alpha-grid", default="1.2:2.0:81")
    sp.add_argument("--psi-init", type=float, default=math.pi - 0.01)
    sp.add_argument("--settle-time", type=float, default=5000.0)
    sp.add_argument("--perturbation", type=float, default=1e-3)
    sp.add_argument("--step", type=float, default=0.01)
    sp.set_defaults(func=cmd_phase_sweep)

    def add_model(sp_, with_target=True):
        sp_.add_argument("--A", type=float, default=0.9)
        sp_.add_argument("--B", type=float, default=2.3)
        if with_target:
            sp_.add_argument("--target-r", type=float, default=0.5,
                             help="second-harmonic weight of the target")
            sp_.add_argument("--coupling", default=None,
                             help="JSON file with a previously fitted coupling")

    sp = subs.add_parser("engineer", help="fit the delayed polynomial coupling")
    _add_common(sp)
    add_model(sp, with_target=False)
    sp.add_argument("--target-r", type=float, default=0.5)
    sp.set_defaults(func=cmd_engineer)

    sp = subs.add_parser("simulate", help="integrate the coupled pair once")
    _add_common(sp)
    add_model(sp)
    sp.add_argument("--K", type=float, default=0.05)
    sp.add_argument("--tau", type=float, default=0.0)
    sp.add_argument("--tau-in-periods", action="store_true",
                    help="interpret --tau as a fraction of the period")
    sp.add_argument("--ic-alpha", type=float, default=math.pi / 3)
    sp.add_argument("--periods", type=float, default=60.0)
    sp.add_argument("--record-periods", type=float, default=20.0)
    sp.add_argument("--steps-per-period", type=int, default=2000)
    sp.add_argument("--downsample", type=int, default=10)
    sp.set_defaults(func=cmd_simulate)

    sp = subs.add_parser("tau-sweep", help="bidirectional common-delay sweep")
    _add_common(sp)
    add_model(sp)
    sp.add_argument("--K", type=float, default=0.05)
    sp.add_argument("--tau-grid", default="0:0.5T:41")
    sp.add_argument("--settle-periods", type=float, default=100.0)
    sp.add_argument("--measure-periods", type=float, default=30.0)
    sp.add_argument("--threshold", type=float, default=0.5)
    sp.set_defaults(func=cmd_tau_sweep)

    sp = subs.add_parser("param-map", help="two-parameter (K, tau) attractor map")
    _add_common(sp)
    add_model(sp)
    sp.add_argument("--K-grid", default="0.01:0.20:20")
    sp.add_argument("--tau-grid", default="0:0.5T:41")
    sp.add_argument("--ic-alphas", default=f"0.0,{math.pi},{math.pi / 3},{2 * math.pi / 3}")
    sp.add_argument("--settle-periods", type=float, default=80.0)
    sp.add_argument("--measure-periods", type=float, default=30.0)
    sp.set_defaults(func=cmd_param_map)

    sp = subs.add_parser("feedback-sim", help="delayed mean-field feedback run")
    _add_common(sp)
    add_model(sp, with_target=False)
    sp.add_argument("--K", type=float, default=0.05)
    sp.add_argument("--tau", type=float, default=0.0)
    sp.add_argument("--tau-in-periods", action="store_true")
    sp.add_argument("--ic-alpha", type=float, default=0.5)
    sp.add_argument("--periods", type=float, default=60.0)
    sp.add_argument("--window-periods", type=float, default=10.0)
    sp.add_argument("--record-periods", type=float, default=20.0)
    sp.add_argument("--downsample", type=int, default=10)
    sp.set_defaults(func=cmd_feedback_sim)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _load_config(args, parser)
        return args.func(args)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    except (ValueError, json.JSONDecodeError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    except (dde.NonFiniteState, dde.StepTooLarge, brusselator.NoCycleFound,
            brusselator.AdjointNotConverged, brusselator.FitFailed) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
