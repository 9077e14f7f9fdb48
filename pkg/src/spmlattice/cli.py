"""Command-line entry point.

Exit codes: 0 ok, 1 property violation, 2 config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from spmlattice import __version__
from spmlattice.attractor import (
    absorption_experiment,
    nullity_experiment,
    pullback_attraction,
    sample_ball,
)
from spmlattice.config import ConfigError, load_config, model_params, resolved, site_profile, tail_sites, validate
from spmlattice.dynamics import energy_report, integrate
from spmlattice.integrator import IntegrationError
from spmlattice.lattice import LatticeVector
from spmlattice.noise import ou_path, path_manifest, paths_to_csv, sample_wiener, temperedness_diag
from spmlattice.nonlinearity import PhiSpec, suggested_constants, verify_growth, verify_monotonicity

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3

log = logging.getLogger("spmlattice")


class Run:
    """Output directory bookkeeping: data files plus one manifest."""

    def __init__(self, command: str, cfg: dict, seeds: list, out: Path, plot_data: bool):
        self.command = command
        self.cfg = cfg
        self.seeds = seeds
        self.out = out
        self.plot_data = plot_data
        self.files: list[str] = []
        out.mkdir(parents=True, exist_ok=True)

    def write(self, name: str, text: str) -> None:
        (self.out / name).write_text(text)
        self.files.append(name)

    def manifest(self, status: int, summary: dict) -> None:
        doc = {
            "command": self.command,
            "artifact_version": __version__,
            "seeds": self.seeds,
            "config": resolved(self.cfg),
            "files": self.files,
            "exit_status": status,
            "summary": summary,
            "created": datetime.now(timezone.utc).isoformat(),
        }
        (self.out / f"manifest_{self.command}.json").write_text(
            json.dumps(doc, indent=2, sort_keys=True, default=float)
        )


def _exp(cfg):
    return cfg["experiment"]


def cmd_verify_phi(run: Run) -> int:
    cfg = run.cfg
    params = model_params(cfg)
    spec: PhiSpec = params.phi
    vp = cfg["verify_phi"]
    try:
        c1, c2, k = suggested_constants(spec)
    except ValueError:
        c1 = c2 = k = None
    c1 = float(vp.get("c1", c1)) if vp.get("c1", c1) is not None else None
    c2 = float(vp.get("c2", c2)) if vp.get("c2", c2) is not None else None
    k = float(vp.get("k", k)) if vp.get("k", k) is not None else None
    if None in (c1, c2, k):
        raise ConfigError("verify_phi: constants c1, c2, k are required for a user_table Phi")
    a_bound = float(vp.get("a_bound", float(params.a.values.max()) if params.a.values.size else 0.0))
    growth = verify_growth(spec, c1, c2)
    mono = verify_monotonicity(spec, k, a_bound)
    print(growth.table())
    print()
    print(mono.table())
    run.write("verify_phi_growth.json", growth.to_json())
    run.write("verify_phi_monotonicity.json", mono.to_json())
    ok = growth.passed and mono.passed
    status = EXIT_OK if ok else EXIT_VIOLATION
    run.manifest(status, {"growth": growth.passed, "monotonicity": mono.passed})
    return status


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    return buf.getvalue()


def cmd_simulate(run: Run) -> int:
    cfg, ex = run.cfg, _exp(run.cfg)
    params = model_params(cfg)
    T = float(ex["T"])
    dt = float(cfg["noise"]["dt"])
    tol = float(cfg["integrator"]["tol"])
    v0 = LatticeVector(site_profile(ex["v0"], params.half_width, cfg.get("_base_dir"), "experiment.v0"))
    summary, ok = {}, True
    for seed in run.seeds:
        ou = ou_path(sample_wiener(seed, -max(50.0, 10.0 * T), T, dt))
        try:
            traj = integrate(v0, ou, params, T, tol)
        except IntegrationError as exc:
            exc.seed = seed
            raise
        rep = energy_report(traj)
        run.write(f"trajectory_s{seed}.csv", traj.to_csv(tail_sites(cfg)))
        run.write(
            f"energy_s{seed}.csv",
            _csv(
                ["t", "norm_sq", "dissipation_l2", "dissipation_lp", "majorant", "residual"],
                zip(rep.times, rep.norm_sq, rep.dissipation_l2, rep.dissipation_lp, rep.majorant, rep.residual),
            ),
        )
        if ex.get("snapshots"):
            run.write(f"snapshots_s{seed}.json", traj.snapshots_json())
        if run.plot_data:
            rows = []
            for t, a, b in zip(rep.times, rep.norm_sq, rep.majorant):
                rows.append(["simulate", seed, float(t), "norm_sq", float(a)])
                rows.append(["simulate", seed, float(t), "majorant", float(b)])
            run.write(f"plot_simulate_s{seed}.csv", _csv(["experiment", "seed", "t", "quantity", "value"], rows))
        summary[str(seed)] = {
            "min_energy_residual": rep.min_residual,
            "eta": rep.eta,
            "xi": rep.xi,
            "steps": traj.log.accepted,
            "rejected": traj.log.rejected,
        }
        ok &= rep.passed
    status = EXIT_OK if ok else EXIT_VIOLATION
    run.manifest(status, summary)
    return status


def _workers(run):
    return int(run.cfg.get("_workers", 1))


def cmd_absorb(run: Run) -> int:
    cfg, ex = run.cfg, _exp(run.cfg)
    params = model_params(cfg)
    rep = absorption_experiment(
        float(ex["B_radius"]),
        ex["pullback_times"],
        run.seeds,
        params,
        dt=float(cfg["noise"]["dt"]),
        tol=float(cfg["integrator"]["tol"]),
        horizon=float(cfg["noise"]["horizon"]),
        n_random=int(ex["n_random"]),
        workers=_workers(run),
    )
    run.write("absorb_report.json", rep.to_json())
    run.write("absorb_matrix.csv", rep.matrix_csv())
    if run.plot_data:
        run.write("plot_absorb.csv", rep.long_csv())
    ok = all(rep.inside[s][-1] for s in rep.seeds)
    for s in rep.seeds:
        log.info("seed %d: R^2=%.6g absorbed at t=%s (bound %.4g)", s, rep.radius_sq[s],
                 rep.absorption_time[s], rep.bound_time[s])
    status = EXIT_OK if ok else EXIT_VIOLATION
    run.manifest(status, {"absorption_time": rep.absorption_time, "bound_time": rep.bound_time})
    return status


def cmd_pullback(run: Run) -> int:
    cfg, ex = run.cfg, _exp(run.cfg)
    params = model_params(cfg)
    r1, r2 = (float(r) for r in ex["radii"])
    n = params.half_width
    A = sample_ball(n, r1, 0, int(ex["n_random"]))
    B = sample_ball(n, r2, 1, int(ex["n_random"]))
    rep = pullback_attraction(
        A, B, ex["pullback_times"], run.seeds, params,
        dt=float(cfg["noise"]["dt"]), tol=float(cfg["integrator"]["tol"]), workers=_workers(run),
    )
    run.write("pullback_report.json", rep.to_json())
    run.write("pullback_matrix.csv", rep.matrix_csv())
    if run.plot_data:
        run.write("plot_pullback.csv", rep.long_csv())
    final = {s: rep.distances[s]["mutual"][-1] for s in rep.seeds}
    ok = all(d <= float(ex["attraction_tol"]) for d in final.values())
    status = EXIT_OK if ok else EXIT_VIOLATION
    run.manifest(status, {"final_mutual_distance": final})
    return status


def cmd_tails(run: Run) -> int:
    cfg, ex = run.cfg, _exp(run.cfg)
    params = model_params(cfg)
    summary, ok = {}, True
    for eps in ex["epsilon_ladder"]:
        rep = nullity_experiment(
            float(eps), ex["pullback_times"], run.seeds, params,
            dt=float(cfg["noise"]["dt"]), tol=float(cfg["integrator"]["tol"]),
            horizon=float(cfg["noise"]["horizon"]), n_random=int(ex["n_random"]), workers=_workers(run),
        )
        tag = f"{float(eps):g}"
        run.write(f"tails_eps{tag}_report.json", rep.to_json())
        run.write(f"tails_eps{tag}_matrix.csv", rep.matrix_csv())
        if run.plot_data:
            run.write(f"plot_tails_eps{tag}.csv", rep.long_csv())
        summary[tag] = {str(s): rep.extra["T_N"][s] for s in rep.seeds}
        for s in rep.seeds:
            m = rep.extra["min_I0"][s]
            ok &= m[-1] <= m[0]
    status = EXIT_OK if ok else EXIT_VIOLATION
    run.manifest(status, summary)
    return status


def cmd_ou_diag(run: Run) -> int:
    cfg, ex = run.cfg, _exp(run.cfg)
    T = float(ex["ou_T"])
    dt = float(cfg["noise"]["dt"])
    thr = float(ex["temper_threshold"])
    rows, summary, ok = [], {}, True
    for seed in run.seeds:
        path = sample_wiener(seed, -max(50.0, 0.1 * T), T, dt)
        ou = ou_path(path)
        diag = temperedness_diag(ou, thr)
        fwd = ou.values[ou.index(0.0):]
        var = float(np.var(fwd))
        summary[str(seed)] = {"variance": var, "verdict": diag.verdict}
        ok &= diag.vanishing
        run.write(f"ou_diag_s{seed}.json", json.dumps({"variance": var, **diag.to_dict()}, indent=2))
        for t, r, m in zip(diag.times, diag.ratio, diag.mean):
            rows.append([seed, float(t), float(r), float(m)])
        if ex.get("export_path"):
            run.write(f"path_s{seed}.csv", paths_to_csv(path, ou))
            run.write(f"path_s{seed}.json", path_manifest(path))
    run.write("ou_diag.csv", _csv(["seed", "t", "abs_z_over_t", "mean_z"], rows))
    if run.plot_data:
        long = []
        for seed, t, r, m in rows:
            long.append(["ou-diag", seed, t, "abs_z_over_t", r])
            long.append(["ou-diag", seed, t, "mean_z", m])
        run.write("plot_ou_diag.csv", _csv(["experiment", "seed", "t", "quantity", "value"], long))
    status = EXIT_OK if ok else EXIT_VIOLATION
    run.manifest(status, summary)
    return status


COMMANDS = {
    "verify-phi": cmd_verify_phi,
    "simulate": cmd_simulate,
    "absorb": cmd_absorb,
    "pullback": cmd_pullback,
    "tails": cmd_tails,
    "ou-diag": cmd_ou_diag,
}


def _seed_list(text: str) -> list[int]:
    try:
        return [int(s) for s in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spmlattice", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=_seed_list, action="extend", help="seed list, e.g. '0 1 2' or 0,1,2")
        p.add_argument("--out", help="output directory (default: config 'output')")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--emit-plot-data", action="store_true", help="also write long-format CSV")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = validate(load_config(args.config))
        if args.seed:
            cfg["noise"]["seeds"] = args.seed
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        cfg["_workers"] = args.workers
        out = Path(args.out or cfg["output"])
        run = Run(args.command, cfg, list(cfg["noise"]["seeds"]), out, args.emit_plot_data)
        return COMMANDS[args.command](run)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, FloatingPointError) as exc:
        seed = getattr(exc, "seed", None)
        where = f" (seed {seed}, t={getattr(exc, 't', float('nan')):.6g})" if seed is not None else ""
        print(f"numerical failure{where}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
