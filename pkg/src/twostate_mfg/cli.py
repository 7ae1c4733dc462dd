"""Command-line front end writing every experiment as CSV plus a JSON manifest.

Exit codes: 0 success, 2 invalid arguments, 3 numerical failure,
4 failed property check (``--check``).
"""

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .master import check_entropy_jump, entropy_Z, induced_flow, sign_root, u_star
from .mfg import MfgTrajectory, build_trajectory, enumerate_terminal_means, threshold_time
from .nash import convergence_error, solve_value
from .potential import branch_costs, ordering_checks, quadrature_residuals
from .simulation import (
    SimConfig,
    chaos_estimate,
    loglog_slope,
    limit_rate_field,
    run_replication,
    zero_start_experiment,
)

OUT_ENV = "TWOSTATE_MFG_OUT"

#: name -> (schema version, header).  Changing a header requires a version bump.
SCHEMAS = {
    "roots": (1, ["T", "m0", "threshold_T", "label", "M", "residual"]),
    "trajectories": (1, ["label", "t", "z", "m"]),
    "entropy_field": (1, ["tau", "m", "M", "Z", "odd_residual"]),
    "value_star": (1, ["t", "mu", "Ustar"]),
    "jumps": (1, ["tau", "z_plus", "z_minus", "jump_ok", "rh_residual"]),
    "converge": (1, ["N", "T", "eps", "error", "ratio", "terminal_error"]),
    "chaos": (1, ["N", "mu0", "T", "reps", "seed", "estimate", "stderr"]),
    "events": (1, ["N", "rep", "t", "player", "y_flip", "x_flip"]),
    "zero_start": (1, ["N", "T", "reps", "seed", "sign", "count", "frequency"]),
    "zero_start_path": (1, ["t", "mean_abs_empirical", "m_plus"]),
    "potential": (
        1,
        ["T", "m0", "label", "M", "phi", "quad_residual", "is_argmin", "ordering_ok", "tie"],
    ),
}


class CheckFailed(Exception):
    pass


def fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


class Output:
    """Collects tables of one command and writes them with their manifests."""

    def __init__(self, command, params, out_dir):
        self.command = command
        self.params = params
        self.out_dir = Path(out_dir)
        self.started = time.perf_counter()
        self.tables = []
        self.summary = {}

    def add(self, name, rows):
        version, header = SCHEMAS[name]
        for row in rows:
            if len(row) != len(header):
                raise RuntimeError(f"row width mismatch in table {name}")
        self.tables.append((name, rows))

    def render(self, name, rows):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(SCHEMAS[name][1])
        writer.writerows([[fmt(v) for v in row] for row in rows])
        return buf.getvalue()

    def write(self, stream=None):
        stream = sys.stdout if stream is None else stream
        self.out_dir.mkdir(parents=True, exist_ok=True)
        duration = time.perf_counter() - self.started
        for n, (name, rows) in enumerate(self.tables):
            text = self.render(name, rows)
            path = self.out_dir / f"{name}.csv"
            path.write_text(text)
            version, header = SCHEMAS[name]
            manifest = {
                "command": self.command,
                "params": self.params,
                "seed": self.params.get("seed"),
                "version": __version__,
                "schema": {"name": name, "version": version, "columns": header},
                "output": str(path),
                "rows": len(rows),
                "duration_s": duration,
                "summary": self.summary,
            }
            (self.out_dir / f"{name}.manifest.json").write_text(
                json.dumps(manifest, indent=2, sort_keys=True) + "\n"
            )
            if n == 0:
                stream.write(text)


def cmd_roots(args, out):
    thr = threshold_time(args.m0)
    roots = enumerate_terminal_means(args.T, args.m0)
    rows = [
        [args.T, args.m0, thr, label, M, abs(r)]
        for (label, M), r in zip(roots, roots.residuals())
    ]
    out.add("roots", rows)
    t = np.linspace(0.0, args.T, args.n_t)
    traj_rows = []
    for label, M in roots:
        traj = build_trajectory(args.T, args.m0, M, label)
        traj_rows += [[label, ti, zi, mi] for ti, zi, mi in zip(t, traj.z(t), traj.m(t))]
    out.add("trajectories", traj_rows)
    out.summary = {"n_roots": len(roots), "threshold_T": thr}
    if args.check and max(roots.residuals()) > 1e-10:
        raise CheckFailed("root residual above 1e-10")


def cmd_entropy(args, out):
    taus = np.linspace(0.0, args.T, args.n_tau)
    ms = np.linspace(-1.0, 1.0, args.n_m)
    rows = []
    max_odd = 0.0
    for tau in taus:
        M = sign_root(tau, ms)
        Z = entropy_Z(tau, ms)
        odd = np.abs(Z + entropy_Z(tau, -ms))
        max_odd = max(max_odd, float(odd.max()))
        rows += [[tau, m, a, b, c] for m, a, b, c in zip(ms, M, Z, odd)]
    out.add("entropy_field", rows)
    mus = np.linspace(0.0, 1.0, args.n_m)
    ts = args.T - taus
    out.add("value_star", [[t, mu, u_star(t, mu, args.T)] for t in ts for mu in mus])
    jump_rows = []
    all_ok = True
    for tau in taus[taus > 0.5]:
        j = check_entropy_jump(tau)
        all_ok &= j.jump_ok and j.rh_residual <= 1e-12
        jump_rows.append([tau, j.z_plus, j.z_minus, j.jump_ok, j.rh_residual])
    out.add("jumps", jump_rows)
    initial = float(np.max(np.abs(entropy_Z(0.0, ms) - 2 * ms)))
    out.summary = {"max_odd_residual": max_odd, "initial_residual": initial, "jumps_ok": bool(all_ok)}
    if args.check and not (all_ok and max_odd <= 1e-12 and initial == 0.0):
        raise CheckFailed("entropy solution checks failed")


def cmd_converge(args, out):
    rows = []
    prev = None
    ok = True
    for N in args.N:
        table = solve_value(N, args.T)
        err = convergence_error(N, args.T, args.eps, table=table)
        terminal = float(np.max(np.abs(table.values[-1] - (1 - 2 * table.mu))))
        ratio = err / prev if prev else float("nan")
        if prev and N >= 32 and ratio > 0.67:
            ok = False
        rows.append([N, args.T, args.eps, err, ratio, terminal])
        prev = err
    out.add("converge", rows)
    if args.check and not ok:
        raise CheckFailed("convergence ratio above 0.67 for N >= 32")


def cmd_chaos(args, out):
    if args.mu0 == 0.5:
        raise ValueError("--mu0 must differ from 0.5")
    flow = induced_flow(2.0 * args.mu0 - 1.0, args.T)
    z = limit_rate_field(flow)
    estimates = []
    events = []
    for N in args.N:
        table = solve_value(N, args.T)
        cfg = SimConfig(N=N, T=args.T, mu0=args.mu0, seed=args.seed, reps=args.reps)
        paths = [run_replication(cfg, r, table=table, limit_z=z) for r in range(cfg.reps)]
        estimates.append(chaos_estimate(paths))
        if args.events:
            for p in paths:
                events += [
                    [N, p.rep, t, i, yf, xf]
                    for t, i, yf, xf in zip(p.times, p.players, p.y_flip, p.x_flip)
                ]
    out.add(
        "chaos",
        [[e.N, args.mu0, args.T, e.reps, args.seed, e.estimate, e.stderr] for e in estimates],
    )
    if args.events:
        out.add("events", events)
    decreasing = all(
        a.estimate - b.estimate > 2 * math.hypot(a.stderr, b.stderr)
        for a, b in zip(estimates, estimates[1:])
    )
    slope = None
    if all(e.estimate > 0 for e in estimates) and len(estimates) > 1:
        slope = loglog_slope(estimates)
    out.summary = {"strictly_decreasing": decreasing, "loglog_slope": slope}
    if args.check and not (decreasing and slope is not None and -1.0 <= slope <= -0.3):
        raise CheckFailed(f"chaos checks failed (decreasing={decreasing}, slope={slope})")


def cmd_zero_start(args, out):
    N = args.N[0]
    table = solve_value(N, args.T)
    cfg = SimConfig(N=N, T=args.T, mu0=0.5, seed=args.seed, reps=args.reps)
    res = zero_start_experiment(cfg, table)
    out.add(
        "zero_start",
        [
            [N, args.T, args.reps, args.seed, s, round(f * args.reps), f]
            for s, f in res.frequencies.items()
        ],
    )
    zero = enumerate_terminal_means(args.T, 0.0)
    m_plus = MfgTrajectory(args.T, 0.0, zero["M3"])
    out.add(
        "zero_start_path",
        [[t, a, m_plus.m(t)] for t, a in zip(res.checkpoints, res.mean_abs_path)],
    )
    out.summary = {"mean_abs_terminal": res.mean_abs_terminal, "M_plus": zero["M3"]}
    if args.check and not 0.45 <= res.frequencies["+"] <= 0.55:
        raise CheckFailed("terminal sign frequency outside [0.45, 0.55]")


def cmd_potential(args, out):
    rows = []
    ok = True
    for m0 in args.m0:
        costs = branch_costs(args.T, m0)
        resid = quadrature_residuals(args.T, m0)
        ordering = costs.ordering_holds() if m0 != 0 else None
        if m0 > 0 and args.T > threshold_time(m0):
            ordering = ordering and all(ordering_checks(args.T, m0).values())
        if ordering is False and args.T > threshold_time(m0):
            ok = False
        if max(resid.values()) > 1e-8:
            ok = False
        for label, M, c in zip(costs.labels, costs.roots, costs.costs):
            rows.append(
                [
                    args.T,
                    m0,
                    label,
                    M,
                    c,
                    resid[label],
                    label in costs.argmin,
                    "" if ordering is None else bool(ordering),
                    costs.tie,
                ]
            )
    out.add("potential", rows)
    if args.check and not ok:
        raise CheckFailed("potential ordering or quadrature check failed")


def _mean(text):
    v = float(text)
    if not -1.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError("must lie in [-1, 1]")
    return v


def _positive(text):
    v = float(text)
    if not (math.isfinite(v) and v > 0):
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _fraction(text):
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError("must lie in [0, 1]")
    return v


def _count(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser():
    parser = argparse.ArgumentParser(
        prog="twostate-mfg", description="Two-state mean field game experiments."
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=False):
        p.add_argument("--T", type=_positive, default=2.0)
        p.add_argument("--out", default=os.environ.get(OUT_ENV, "mfg_results"))
        p.add_argument("--check", action="store_true", help="exit 4 if a property check fails")
        if seed:
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--reps", type=_count, default=1000)

    p = sub.add_parser("roots", help="all MFG solutions for (T, m0)")
    common(p)
    p.add_argument("--m0", type=_mean, default=0.0)
    p.add_argument("--n-t", dest="n_t", type=_count, default=101)
    p.set_defaults(func=cmd_roots)

    p = sub.add_parser("entropy", help="entropy solution and shock diagnostics")
    common(p)
    p.add_argument("--n-tau", dest="n_tau", type=_count, default=21)
    p.add_argument("--n-m", dest="n_m", type=_count, default=41)
    p.set_defaults(func=cmd_entropy)

    p = sub.add_parser("converge", help="N-player values against the entropy value")
    common(p)
    p.add_argument("--N", type=_count, nargs="+", default=[16, 32, 64, 128])
    p.add_argument("--eps", type=_positive, default=0.2)
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("chaos", help="propagation of chaos estimates")
    common(p, seed=True)
    p.add_argument("--N", type=_count, nargs="+", default=[8, 16, 32, 64])
    p.add_argument("--mu0", type=_fraction, default=0.75)
    p.add_argument("--events", action="store_true", help="also write the per-replication flip log")
    p.set_defaults(func=cmd_chaos)

    p = sub.add_parser("zero-start", help="selection experiment from mu0 = 1/2")
    common(p, seed=True)
    p.add_argument("--N", type=_count, nargs=1, default=[64])
    p.set_defaults(func=cmd_zero_start)

    p = sub.add_parser("potential", help="branch costs of the potential game")
    common(p)
    p.add_argument("--m0", type=_mean, nargs="+", default=[0.0, 0.05, 0.2, 0.5])
    p.set_defaults(func=cmd_potential)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on bad flags
    params = {k: v for k, v in vars(args).items() if k not in ("func", "out", "check")}
    out = Output(args.command, params, args.out)
    try:
        args.func(args, out)
    except CheckFailed as exc:
        out.write()
        print(f"check failed: {exc}", file=sys.stderr)
        return 4
    except (ValueError, TypeError) as exc:
        print(f"invalid arguments: {exc}", file=sys.stderr)
        return 2
    except ArithmeticError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    out.write()
    return 0
