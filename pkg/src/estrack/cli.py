"""Command-line front end.

Verbs:

* ``run CONFIG``       one experiment; writes trajectory CSV, report
                       JSON and a resolved manifest TOML
* ``sweep CONFIG``     every cell of the config's [sweep] table through
                       a worker pool; writes an aggregate CSV
* ``verify [SUITE..]`` the acceptance suites, printing measured values
                       against their tolerances
* ``print-defaults``   the fully commented reference config

Exit codes: 0 success, 1 a run or check failed, 2 the config was
rejected.  Heavy modules are imported inside the verbs so that
``verify jacobian`` and ``print-defaults`` stay quick.

Artifacts are deterministic: re-running a manifest reproduces the CSV
bytes exactly.  Report JSON additionally carries wall time and step
counts, so it is reproducible up to those fields.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

__all__ = ["main"]


def _out_dir(cfg, override):
    from .config import output_root
    base = override if override is not None else \
        os.path.join(output_root(), cfg.out_dir)
    os.makedirs(base, exist_ok=True)
    return base


def _write_trajectory_csv(traj, path) -> None:
    import io
    buf = io.StringIO()
    buf.write("t,x1,x2,u1,u2,y\n")
    for i in range(traj.t.size):
        buf.write(f"{traj.t[i]:.17g},{traj.x[i, 0]:.17g},{traj.x[i, 1]:.17g},"
                  f"{traj.u[i, 0]:.17g},{traj.u[i, 1]:.17g},"
                  f"{traj.y[i]:.17g}\n")
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def _report_json(traj, report, error) -> str:
    payload = {"meta": {k: traj.meta[k] for k in sorted(traj.meta)}}
    if report is not None:
        payload["report"] = report.to_dict()
    if error is not None:
        payload["report_error"] = error
    return json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n"


def _load(path):
    from .config import load_config
    return load_config(path)


def _cmd_run(args) -> int:
    from . import __version__
    from .config import manifest_toml
    from .experiments import run_from_config

    cfg = _load(args.config)
    out = _out_dir(cfg, args.out_dir)
    traj, report, _ = run_from_config(cfg)
    error = None
    if isinstance(report, Exception):
        report, error = None, str(report)

    prefix = os.path.join(out, cfg.prefix)
    _write_trajectory_csv(traj, prefix + ".csv")
    with open(prefix + "_report.json", "w") as fh:
        fh.write(_report_json(traj, report, error))
    with open(prefix + "_manifest.toml", "w") as fh:
        fh.write(manifest_toml(cfg, version=__version__))

    status = traj.meta.get("status")
    print(f"run: {cfg.prefix}: status {status}, "
          f"{traj.meta.get('steps')} steps, "
          f"t reached {traj.meta.get('t_reached'):g}")
    if report is not None:
        costs = report.mean_sqrt_cost_per_period
        print(f"run: per-period mean sqrt(y): "
              + " -> ".join(f"{c:.6g}" for c in costs))
        print(f"run: bound rho = {report.rho:g} "
              f"{'satisfied' if report.bound_satisfied else 'NOT satisfied'}"
              f" (t_f = {report.t_f:g})")
    print(f"run: wrote {prefix}.csv, _report.json, _manifest.toml")
    return 0 if status == "ok" else 1


def _sweep_cell(manifest_text, gains_tuple):
    """Worker: re-parse the manifest and run one gains cell.

    Returns the TrackingReport, or the report-stage ValueError in band;
    anything else (domain errors at setup, bad state) propagates and is
    recorded by the parent as a failed cell.
    """
    from .config import parse_config
    from .controller import ESGains
    from .experiments import run_from_config
    cfg = parse_config(manifest_text)
    gains = ESGains(gamma=gains_tuple[0], epsilon=gains_tuple[1],
                    eta=gains_tuple[2], n_u=cfg.gains.n_u,
                    h_floor=cfg.gains.h_floor)
    _, report, _ = run_from_config(cfg, gains=gains)
    return report


def _cmd_sweep(args) -> int:
    from concurrent.futures import ProcessPoolExecutor
    from . import __version__
    from .analysis import sweep_summary, write_sweep_csv
    from .config import manifest_toml

    cfg = _load(args.config)
    if not cfg.has_sweep:
        print("sweep: config has no [sweep] axes", file=sys.stderr)
        return 2
    out = _out_dir(cfg, args.out_dir)
    manifest = manifest_toml(cfg, version=__version__)
    cells = cfg.sweep_cells()
    tuples = [(g.gamma, g.epsilon, g.eta) for g in cells]

    results = []
    n_failed = 0
    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        futures = [pool.submit(_sweep_cell, manifest, t) for t in tuples]
        for g, fut in zip(cells, futures):
            try:
                res = fut.result()
            except Exception as exc:  # recorded per cell, sweep continues
                res = exc
            results.append((g, res))
            if isinstance(res, Exception):
                n_failed += 1
                print(f"sweep: cell gamma={g.gamma:g} epsilon={g.epsilon:g} "
                      f"eta={g.eta:g} failed: {res}", file=sys.stderr)

    rows = sweep_summary(results)
    prefix = os.path.join(out, cfg.prefix)
    write_sweep_csv(rows, prefix + "_sweep.csv")
    with open(prefix + "_manifest.toml", "w") as fh:
        fh.write(manifest)
    n_degraded = sum(r["degraded"] for r in rows)
    print(f"sweep: {len(rows)} cells, {n_failed} failed, "
          f"{n_degraded} degraded")
    print(f"sweep: wrote {prefix}_sweep.csv, _manifest.toml")
    return 1 if n_failed else 0


def _cmd_verify(args) -> int:
    from .acceptance import SUITES, run_suite
    names = args.suites or sorted(SUITES)
    bad = [n for n in names if n not in SUITES]
    if bad:
        print(f"verify: unknown suite {bad[0]!r}; "
              f"choose from {sorted(SUITES)}", file=sys.stderr)
        return 2
    n_failed = 0
    for name in names:
        for res in run_suite(name):
            print(res.report())
            n_failed += not res.passed
    print(f"verify: {n_failed} failed" if n_failed else "verify: all passed")
    return 1 if n_failed else 0


def _cmd_print_defaults(_args) -> int:
    from .config import default_config_toml
    sys.stdout.write(default_config_toml())
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="estrack",
        description="extremum-seeking tracking experiments")
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("run", help="execute one experiment config")
    p.add_argument("config", help="path to a TOML experiment config")
    p.add_argument("-o", "--out-dir", default=None,
                   help="override the output directory")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("sweep", help="run every [sweep] cell of a config")
    p.add_argument("config")
    p.add_argument("-o", "--out-dir", default=None)
    p.add_argument("-j", "--jobs", type=int, default=None,
                   help="worker processes (default: one per core)")
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("verify", help="run acceptance suites")
    p.add_argument("suites", nargs="*",
                   metavar="suite",
                   help="jacobian | steady-state | periodic-orbit | "
                        "tracking | reduced-system (default: all)")
    p.set_defaults(fn=_cmd_verify)

    p = sub.add_parser("print-defaults",
                       help="print the reference config with comments")
    p.set_defaults(fn=_cmd_print_defaults)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except FileNotFoundError as exc:
        print(f"estrack: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        from .config import ConfigError
        if isinstance(exc, ConfigError):
            print(f"estrack: config rejected: {exc}", file=sys.stderr)
            return 2
        print(f"estrack: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
