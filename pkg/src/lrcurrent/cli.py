"""Command-line experiment runner.

Subcommands: info, generating, rate, fluct, floor, ensemble, oracle-test.
Every run writes its outputs atomically and a JSON manifest from which the
run can be repeated with ``--config <manifest>``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError

from . import __version__
from .config import ConfigParseError, RunConfig, RunManifest, sha256_file
from .currents import QuadratureError, assemble_K, build_system
from .ensemble import ConfigError, floor_check, run_ensemble
from .fock import oracle_suite
from .lattice import CapacityError, ShiftRangeError
from .ldp import (generating_curve, legendre, make_instance, fluctuation_report,
                  quadratic_asymptotics_check)
from .operators import norm_bound
from .quasifree import NumericError

OUT_ENV = "LRCURRENT_OUT"
EXIT_OK, EXIT_PARSE, EXIT_PRECONDITION, EXIT_NUMERIC, EXIT_ORACLE = 0, 2, 3, 4, 5

log = logging.getLogger("lrcurrent")


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for row in rows:
        wr.writerow([fmt(v) for v in row])
    _atomic_write(path, buf.getvalue())


def write_json(path: Path, data) -> None:
    _atomic_write(path, json.dumps(_plain(data), indent=2, sort_keys=True) + "\n")


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


class Run:
    """Shared state of one CLI invocation."""

    def __init__(self, cfg: RunConfig, out: Path, workers: int, subcommand: str):
        self.cfg = cfg
        self.out = out
        self.workers = workers
        self.manifest = RunManifest(subcommand, cfg.to_dict(), __version__)
        self.outputs: list[Path] = []

    def csv(self, name: str, header, rows) -> None:
        path = self.out / name
        write_csv(path, header, rows)
        self.outputs.append(path)

    def json(self, name: str, data) -> None:
        path = self.out / name
        write_json(path, data)
        self.outputs.append(path)

    def instance(self):
        cfg = self.cfg
        spec = cfg.disorder_spec()
        fld = cfg.field_profile()
        sys_ = build_system(cfg.d, cfg.L, spec, cfg.lam, cfg.theta, margin=cfg.margin,
                            horizon=fld.horizon, ct_params=cfg.ct_params(),
                            eps=cfg.tol("margin_eps"))
        kern = assemble_K(sys_, fld, cfg.direction(), tol=cfg.tol("quad_tol"),
                          max_nodes=int(cfg.tol("max_nodes")))
        self.manifest.seeds.append(spec.seed)
        self.manifest.diagnostics.update({
            "margin": sys_.margin, "margin_rule": sys_.margin_rule,
            "outer_sites": sys_.outer.n_sites,
            "eig_reconstruction_error": sys_.dec.reconstruction_error(),
            "quad_nodes": kern.nodes, "quad_error": kern.quad_error,
        })
        return make_instance(sys_, kern, cfg.beta)

    def finish(self, started: float) -> None:
        self.manifest.wall_clock = time.perf_counter() - started
        self.manifest.outputs = {p.name: sha256_file(p) for p in self.outputs}
        write_json(self.out / f"{self.manifest.subcommand}_manifest.json",
                   self.manifest.to_dict())


def cmd_info(run: Run) -> int:
    cfg = run.cfg
    inst = run.instance()
    sys_ = inst.system
    vals = sys_.dec.values
    summary = {
        "d": cfg.d, "L": cfg.L, "inner_sites": sys_.inner.n_sites,
        "outer_sites": sys_.outer.n_sites, "margin": sys_.margin,
        "margin_rule": sys_.margin_rule, "spectrum_min": float(vals[0]),
        "spectrum_max": float(vals[-1]),
        "norm_bound": norm_bound(cfg.d, cfg.lam, cfg.theta),
        "mu_eta": cfg.ct_params().mu_eta, "kernel_rank": inst.basis.rank,
        "current": inst.current(),
    }
    for k, v in summary.items():
        print(f"{k}: {fmt(v)}")
    run.json("info.json", summary)
    return EXIT_OK


def cmd_generating(run: Run) -> int:
    inst = run.instance()
    curve = generating_curve(inst, run.cfg.s_values())
    run.csv("generating.csv", ("s", "J", "dJ", "d2J", "d3J"),
            zip(curve.s, curve.J, curve.dJ, curve.d2J, curve.d3J))
    return EXIT_OK


def cmd_rate(run: Run) -> int:
    cfg = run.cfg
    inst = run.instance()
    curve = generating_curve(inst, cfg.s_values())
    from .ldp import default_x_grid
    rate = legendre(curve, default_x_grid(curve, int(cfg.x_grid["n"])))
    run.csv("rate.csv", ("x", "I", "flag_boundary"), zip(rate.x, rate.I, rate.boundary))
    curv = float(curve.d2J[curve.at_zero()])
    fit = quadratic_asymptotics_check(rate, curv, threshold=cfg.tol("degenerate"))
    run.json("rate_fit.json", {
        "x_star": rate.x_star, "current": inst.current(), "d2J0": curv,
        "degenerate": fit.degenerate, "predicted_curvature": fit.predicted,
        "windows": fit.windows, "fitted_curvature": fit.fitted, "relative_gap": fit.gaps,
        "boundary_flags": int(rate.boundary.sum()),
    })
    print(f"x_star: {fmt(rate.x_star)}  relative gap: {fmt(fit.gap)}")
    return EXIT_OK


def cmd_fluct(run: Run) -> int:
    cfg = run.cfg
    inst = run.instance()
    rep = fluctuation_report(inst, cfg.field_profile(), cfg.direction(),
                             cfg.disorder_spec().onsite_variance)
    row = rep.to_row()
    run.csv("fluct.csv", tuple(row), [tuple(row.values())])
    for k, v in row.items():
        print(f"{k}: {fmt(v)}")
    return EXIT_OK


def cmd_floor(run: Run) -> int:
    cfg = run.cfg
    spec = cfg.ensemble_spec()
    rep = floor_check(spec, t_max=cfg.tol("t_max"), workers=run.workers,
                      trace_tol=cfg.tol("trace_tol"))
    if rep.result is not None:
        run.csv("floor_samples.csv", ("sample_index", "seed", "L", "quantity", "value"),
                rep.result.rows)
        run.manifest.seeds.extend(sorted({r[1] for r in rep.result.rows}))
    run.json("floor.json", {"passed": rep.passed, "floor": rep.floor, "mean": rep.mean,
                            "stderr": rep.stderr, "margin": rep.margin,
                            "trivial": rep.trivial, "per_sample_ok": rep.per_sample_ok,
                            "quadrature_flag": rep.quadrature_flag})
    print(f"floor: {fmt(rep.floor)}  mean: {fmt(rep.mean)}  margin: {fmt(rep.margin)}  "
          f"{'PASS' if rep.passed else 'FAIL'}")
    return EXIT_OK


def cmd_ensemble(run: Run) -> int:
    cfg = run.cfg
    res = run_ensemble(cfg.ensemble_spec(), tuple(cfg.ensemble.get("quantities", ["J1"])),
                       workers=run.workers)
    run.csv("ensemble.csv", ("sample_index", "seed", "L", "quantity", "value"), res.rows)
    run.manifest.seeds.extend(sorted({r[1] for r in res.rows}))
    summary = {"valid": res.valid, "failure_rate": res.failure_rate,
               "failures": [list(f) for f in res.failures],
               "stats": [vars(s) for s in res.stats.values()]}
    run.json("ensemble_summary.json", summary)
    for st in res.stats.values():
        print(f"L={st.L} {st.quantity}: mean {fmt(st.mean)} std {fmt(st.std)} "
              f"n={st.count}")
    return EXIT_OK if res.valid else EXIT_NUMERIC


def cmd_oracle(run: Run) -> int:
    cfg = run.cfg
    worst = oracle_suite(int(cfg.oracle["draws"]), int(cfg.oracle["seed"]))
    tol = cfg.tol("oracle_tol")
    for k, v in worst.items():
        print(f"{k}: max deviation {v:.3e}")
    run.json("oracle.json", {"max_deviation": worst, "tolerance": tol})
    return EXIT_OK if max(worst.values()) < tol else EXIT_ORACLE


COMMANDS = {"info": cmd_info, "generating": cmd_generating, "rate": cmd_rate,
            "fluct": cmd_fluct, "floor": cmd_floor, "ensemble": cmd_ensemble,
            "oracle-test": cmd_oracle}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lrcurrent", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("subcommand", choices=sorted(COMMANDS))
    p.add_argument("--config", help="YAML/JSON config or a previous run manifest")
    p.add_argument("--seed", type=int, help="disorder seed (also the ensemble base seed)")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./lrcurrent-out)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry; dotted keys reach nested entries")
    p.add_argument("--tolerance", action="append", default=[], metavar="NAME=VALUE")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    sets = list(args.set)
    if args.seed is not None:
        sets += [f"disorder.seed={args.seed}", f"ensemble.base_seed={args.seed}"]
    sets += [f"tolerances.{t}" for t in args.tolerance]
    return cfg.with_overrides(sets)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
    except ConfigParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (ValueError, TypeError, NotImplementedError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    out = Path(args.out or os.environ.get(OUT_ENV) or "lrcurrent-out")
    run = Run(cfg, out, max(1, args.workers), args.subcommand)
    started = time.perf_counter()
    try:
        code = COMMANDS[args.subcommand](run)
    except (NumericError, QuadratureError, LinAlgError, ArithmeticError) as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, CapacityError, ShiftRangeError, ValueError, KeyError,
            NotImplementedError) as exc:
        print(f"error: precondition violated: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    run.finish(started)
    return code


if __name__ == "__main__":
    sys.exit(main())
