"""Command-line interface.

Verbs: ``gen`` (measure pairs), ``constants`` (condition constants for a
pair), ``decompose`` (Haar coefficients and the stopping tree of a sampled
function), ``size-lemma`` (one contraction run), ``verify`` (selected
suites against the frozen calibration table), ``report`` (full default run
with figures), ``calibrate`` (recompute the frozen table).

``TWL_THREADS`` caps trial parallelism inside suites.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .calibration import CalibrationTable, calibrate, packaged_table
from .config import DEFAULT_SUITES, RunConfig, SCENARIOS, scenario_config
from .measures import AtomicMeasure, auto_grid
from .report import build_report, run_suites, write_report


def _load_config(args) -> RunConfig:
    if getattr(args, "config", None):
        cfg = RunConfig.load(args.config)
    else:
        cfg = RunConfig()
    for key in ("seed", "n", "alpha", "kernel", "out"):
        val = getattr(args, key, None)
        if val is not None:
            setattr(cfg, key, val)
    if getattr(args, "suite", None):
        cfg.suites = list(args.suite)
    if getattr(args, "n", None) is not None or getattr(args, "seed", None) is not None:
        cfg.grid = None
        cfg.__post_init__()
    return cfg


def _measures_from_args(args) -> tuple[AtomicMeasure, AtomicMeasure]:
    if args.sigma and args.omega:
        return AtomicMeasure.load(args.sigma), AtomicMeasure.load(args.omega)
    from .generate import measure_pair, rng_for
    rng = rng_for(args.seed if args.seed is not None else 0, 1)
    n = args.n if args.n is not None else 1
    return measure_pair(rng, n, args.atoms, args.atoms)


def cmd_gen(args) -> int:
    from .generate import measure_pair, rng_for
    rng = rng_for(args.seed, 1)
    sigma, omega = measure_pair(rng, args.n, args.sigma_atoms, args.omega_atoms,
                                clusters=args.clusters)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sigma.save(out / "sigma.json")
    omega.save(out / "omega.json")
    print(f"wrote {out / 'sigma.json'} and {out / 'omega.json'}")
    return 0


def cmd_constants(args) -> int:
    from .conditions import compute_constants
    from .config import kernel_from_name
    from .kernels import default_cube_enumerator, operator_norm

    sigma, omega = _measures_from_args(args)
    n = sigma.n
    alpha = args.alpha
    kernel = kernel_from_name(args.kernel, n, alpha)
    if args.grid_config:
        from .grid import GridSpec
        grid = GridSpec.from_config(json.loads(Path(args.grid_config).read_text()))
    else:
        grid = auto_grid(np.vstack([sigma.points, omega.points]), n)
    rep = compute_constants(sigma, omega, alpha, grid, kernel)
    doc = {
        "N": operator_norm(sigma, omega, kernel),
        "T": rep.T,
        "Tstar": rep.T_star,
        "kernel": kernel.key(),
        "truncation": kernel.truncation,
        "enumerated_cubes": len(default_cube_enumerator(grid, sigma, omega)),
        **rep.to_json(),
    }
    _emit(doc, args.out)
    return 0


def cmd_decompose(args) -> int:
    from .corona import cz_stopping_times, verify_stopping_data
    from .generate import random_function, rng_for
    from .haar import analyze
    from .measures import bounding_cube

    sigma, omega = _measures_from_args(args)
    grid = auto_grid(sigma.points, sigma.n)
    root = bounding_cube(grid, sigma)
    rng = rng_for(args.seed if args.seed is not None else 0, 2)
    f = random_function(rng, len(sigma))
    cmap = analyze(f, sigma, root)
    tree = cz_stopping_times(f, sigma, grid, root, ratio=args.ratio)
    checks = verify_stopping_data(tree, f, sigma)

    def node(F):
        kids = tree.tree_children(F)
        return {
            "cube": {"level": F.level, "index": list(F.index)},
            "alpha": tree.alpha[F],
            "corona_size": len(tree.corona_support_cubes(F, sigma)),
            "checks": {"carleson": checks["carleson"], "avg_bound": checks["avg_ratio"]},
            "children": [node(k) for k in kids],
        }

    doc = {
        "coefficients": cmap.to_json_list(),
        "mean": cmap.mean,
        "lossy": cmap.lossy,
        "tree": node(root),
        "C0": tree.C0,
        "ok": checks["ok"],
    }
    _emit(doc, args.out)
    return 0 if checks["ok"] else 1


def cmd_size_lemma(args) -> int:
    from .config import kernel_from_name
    from .suites import run_size_lemma

    cfg = _load_config(args)
    cfg.suites = ["size_lemma"]
    rec = run_size_lemma(cfg)
    runs = rec.details.get("runs", [])
    doc = runs[0] if runs else {"note": "no admissible collection realized"}
    doc["violations"] = rec.violations
    _emit(doc, args.out)
    return 0 if rec.passed else 1


def _table(args) -> CalibrationTable | None:
    if getattr(args, "no_calibration", False):
        return None
    if getattr(args, "calibration", None):
        return CalibrationTable.load(args.calibration)
    return packaged_table()


def cmd_verify(args) -> int:
    cfg = _load_config(args)
    table = _table(args)
    records, timings = run_suites(cfg, table)
    report = build_report(cfg, records)
    out = cfg.out or "twlab_report"
    files = write_report(report, out, timings=timings, figures=not args.no_figures)
    for rec in records:
        status = "PASS" if rec.passed else "FAIL"
        print(f"[{status}] {rec.name:22s} scenario={rec.scenario} "
              f"violations={rec.violations} max_ratio={rec.max_ratio:.6g}")
    print(f"report: {files['json']}")
    return 0 if report["passed"] else 1


def cmd_report(args) -> int:
    table = _table(args)
    base = RunConfig(seed=args.seed if args.seed is not None else RunConfig().seed)
    ok = True
    all_files = []
    for scenario in SCENARIOS:
        cfg = scenario_config(base, scenario)
        if args.quick:
            cfg.instances = max(20, cfg.instances // 10)
            cfg.trials = max(100, cfg.trials // 10)
        cfg.suites = [s for s in DEFAULT_SUITES]
        records, timings = run_suites(cfg, table)
        report = build_report(cfg, records)
        out = Path(args.out or "twlab_reports") / cfg.scenario_key().replace(":", "_")
        files = write_report(report, out, timings=timings, figures=not args.no_figures)
        all_files.append(files)
        ok = ok and report["passed"]
        print(f"{cfg.scenario_key()}: {'PASS' if report['passed'] else 'FAIL'} "
              f"-> {files['json']}")
    return 0 if ok else 1


def cmd_calibrate(args) -> int:
    table = calibrate(args.seed, instances=args.instances, trials=args.trials,
                      progress=print if args.verbose else None)
    out = args.out or str(Path(__file__).parent / "data" / "calibration.json")
    table.save(out)
    print(f"calibration table written to {out}")
    return 0


def _emit(doc: dict, out: str | None) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n")
        print(f"wrote {out}")
    else:
        print(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="twlab", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a measure pair")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n", type=int, default=1)
    g.add_argument("--sigma-atoms", type=int, default=16)
    g.add_argument("--omega-atoms", type=int, default=16)
    g.add_argument("--clusters", type=int, default=0)
    g.add_argument("--out", default="measures")
    g.set_defaults(func=cmd_gen)

    c = sub.add_parser("constants", help="condition constants for a pair")
    c.add_argument("--sigma")
    c.add_argument("--omega")
    c.add_argument("--seed", type=int)
    c.add_argument("--n", type=int)
    c.add_argument("--atoms", type=int, default=12)
    c.add_argument("--alpha", type=float, default=0.0)
    c.add_argument("--kernel", default="hilbert")
    c.add_argument("--grid-config")
    c.add_argument("--out")
    c.set_defaults(func=cmd_constants)

    d = sub.add_parser("decompose", help="Haar coefficients and stopping tree")
    d.add_argument("--sigma")
    d.add_argument("--omega")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--n", type=int)
    d.add_argument("--atoms", type=int, default=16)
    d.add_argument("--ratio", type=float, default=4.0)
    d.add_argument("--out")
    d.set_defaults(func=cmd_decompose)

    s = sub.add_parser("size-lemma", help="one contraction decomposition run")
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--n", type=int)
    s.add_argument("--alpha", type=float)
    s.add_argument("--kernel")
    s.add_argument("--out")
    s.set_defaults(func=cmd_size_lemma)

    v = sub.add_parser("verify", help="run verification suites")
    v.add_argument("--config")
    v.add_argument("--seed", type=int)
    v.add_argument("--n", type=int)
    v.add_argument("--alpha", type=float)
    v.add_argument("--kernel")
    v.add_argument("--suite", action="append")
    v.add_argument("--out")
    v.add_argument("--calibration")
    v.add_argument("--no-calibration", action="store_true")
    v.add_argument("--no-figures", action="store_true")
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("report", help="full default run over all scenarios")
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.add_argument("--quick", action="store_true")
    r.add_argument("--calibration")
    r.add_argument("--no-calibration", action="store_true")
    r.add_argument("--no-figures", action="store_true")
    r.set_defaults(func=cmd_report)

    k = sub.add_parser("calibrate", help="recompute the frozen constant table")
    k.add_argument("--seed", type=int, default=RunConfig().seed)
    k.add_argument("--instances", type=int, default=200)
    k.add_argument("--trials", type=int, default=1000)
    k.add_argument("--out")
    k.add_argument("--verbose", action="store_true")
    k.set_defaults(func=cmd_calibrate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
