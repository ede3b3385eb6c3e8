#!/usr/bin/env python3
"""
Brinkman averaging harness - command line

Usage:
    python -m src.scripts.cli simulate  --config data/configs/desk_scalar_1d.yaml --seed 0 --out runs/sim
    python -m src.scripts.cli averaged  --config data/configs/desk_scalar_1d.yaml --out runs/avg
    python -m src.scripts.cli sweep     --config data/configs/desk_scalar_1d.yaml --out runs/sweep --workers 8
    python -m src.scripts.cli validate  --suite ou
    python -m src.scripts.cli psi-check --config data/configs/desk_scalar_1d.yaml
    python -m src.scripts.cli report    --in runs/sweep --out runs/sweep/summary.md
"""

import argparse
import json
import sys
import time
import traceback
from pathlib import Path
from typing import List, Optional

# Add project root to path
PROJECT_ROOT = Path(__file__).resolve().parents[2]
sys.path.insert(0, str(PROJECT_ROOT))

from src.galerkin.basis import evaluate_on_grid
from src.harness.config import build_problem, config_hash, load_config
from src.harness.ensemble import convergence_sweep
from src.harness.reports import (
    build_manifest,
    summarize_directory,
    write_sweep_outputs,
    write_trajectory_csv,
)
from src.harness.validate import SUITES, psi_ladder, validate
from src.solver.averaging import AveragedCoefficientTable, solve_averaged
from src.solver.slowsolver import energy_diagnostics, simulate_coupled
from src.stochastic.streams import FAST_NOISE, spawn_rng
from src.utils.errors import BrinkmanError
from src.utils.io import format_float, write_json
from src.utils.logs import close_log_file, log_message, setup_log_file


def _out_dir(args, config) -> Path:
    return Path(args.out) if args.out else Path(config.output.dir)


def _banner(title: str):
    log_message("=" * 70)
    log_message(f"🚀 {title}")
    log_message("=" * 70)


def cmd_simulate(args) -> int:
    config = load_config(args.config)
    out_dir = _out_dir(args, config)
    log_path = setup_log_file(out_dir, prefix="simulate")
    _banner("Coupled eps-system run")
    log_message(f"📝 Logging to: {log_path}")

    problem = build_problem(config)
    eps = args.eps if args.eps is not None else config.sweep.epsilons[0]
    start = time.time()
    traj = simulate_coupled(problem, eps, spawn_rng(args.seed, 0, FAST_NOISE))
    energy = energy_diagnostics(traj, problem)

    stem = f"trajectory_eps_{format_float(eps)}_seed_{args.seed}"
    csv_path = write_trajectory_csv(out_dir / f"{stem}.csv", traj)
    write_json(out_dir / f"{stem}_manifest.json", build_manifest(
        config_hash(config),
        {"base_seed": args.seed, "path_index": 0, "stream": FAST_NOISE},
        time.time() - start,
        {"epsilon": eps, "energy_violations": energy.violations, "sup_norm_V": energy.sup_v},
    ))
    log_message(f"✓ {problem.n_steps} steps, final ||u||_H = {traj.norm_h[-1]:.6g}")
    if energy.violations:
        for v in energy.violations:
            log_message(f"⚠️  {v}")
    log_message(f"📄 Trajectory: {csv_path}")
    return 0


def cmd_averaged(args) -> int:
    config = load_config(args.config)
    out_dir = _out_dir(args, config)
    log_path = setup_log_file(out_dir, prefix="averaged")
    _banner("Averaged equation")
    log_message(f"📝 Logging to: {log_path}")

    problem = build_problem(config)
    table = None
    if args.table:
        bound = 1.5 * float(abs(evaluate_on_grid(problem.basis, problem.u0)).max()) + 1.0
        table = AveragedCoefficientTable.load_or_build(out_dir / "tables", problem.spec, problem.basis,
                                                       problem.noise, -bound, bound)
        log_message(f"📋 Averaged-coefficient table {table.key}")
    start = time.time()
    traj = solve_averaged(problem, picard=args.picard, n_nodes=config.sweep.gh_nodes, table=table)
    name = "averaged_picard" if args.picard else "averaged"
    csv_path = write_trajectory_csv(out_dir / f"{name}.csv", traj)
    write_json(out_dir / f"{name}_manifest.json", build_manifest(
        config_hash(config), {}, time.time() - start, {"picard": args.picard, "table": bool(table)},
    ))
    log_message(f"✓ final ||ubar||_H = {traj.norm_h[-1]:.6g}")
    log_message(f"📄 Trajectory: {csv_path}")
    return 0


def cmd_sweep(args) -> int:
    config = load_config(args.config)
    out_dir = _out_dir(args, config)
    log_path = setup_log_file(out_dir, prefix="sweep")
    _banner("Convergence sweep")
    log_message(f"📝 Logging to: {log_path}")
    log_message(f"eps ladder: {config.sweep.epsilons}, paths per eps: {config.sweep.n_paths}")

    report = convergence_sweep(config, workers=args.workers)
    outputs = write_sweep_outputs(out_dir, report, config.sweep.n_paths)
    log_message("\n" + summarize_directory(out_dir))
    log_message(f"⏱️  {report.runtime_seconds:.1f}s")
    for name, path in outputs.items():
        log_message(f"📄 {name}: {path}")
    if not report.passed:
        failed = ", ".join(c.name for c in report.checks if not c.passed)
        log_message(f"⚠️  Ladder checks failed: {failed}; see checks.json")
        return 1
    return 0


def cmd_validate(args) -> int:
    names = sorted(SUITES) if args.suite == "all" else [args.suite]
    results = []
    for name in names:
        result = validate(name)
        results.append(result.to_dict())
        marker = "✓" if result.passed else "✗"
        print(f"{marker} {name} ({result.runtime_seconds:.2f}s)")
        for check in result.checks:
            flag = "✓" if check.passed else "✗"
            threshold = "" if check.threshold is None else f" (threshold {check.threshold:.3g})"
            print(f"    {flag} {check.name}: {check.value:.6g}{threshold}")
    payload = results[0] if len(results) == 1 else {"suites": results}
    if args.out:
        write_json(Path(args.out), payload)
    else:
        print(json.dumps(payload, indent=2))
    return 0 if all(r["passed"] for r in results) else 1


def cmd_psi_check(args) -> int:
    config = load_config(args.config)
    eps = args.eps if args.eps is not None else config.sweep.epsilons[-1]
    result = psi_ladder(config, eps)
    print(json.dumps(result, indent=2))
    return 0 if result["bounded"] else 1


def cmd_report(args) -> int:
    text = summarize_directory(Path(args.inp))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text, encoding="utf-8")
    print(text)
    print(f"📄 Report saved to: {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Brinkman averaging: simulation and verification harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="One coupled eps-system path")
    p.add_argument("--config", required=True, help="YAML experiment file")
    p.add_argument("--seed", type=int, default=0, help="Base seed (path 0 of the sweep streams)")
    p.add_argument("--eps", type=float, default=None, help="eps (default: largest in the sweep ladder)")
    p.add_argument("--out", default=None, help="Output directory (default: output.dir)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("averaged", help="Deterministic averaged equation")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--picard", action="store_true", help="Iterate every step to convergence")
    p.add_argument("--table", action="store_true", help="Use a cached averaged-coefficient table")
    p.set_defaults(func=cmd_averaged)

    p = sub.add_parser("sweep", help="eps ladder with path ensembles")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--workers", type=int, default=None, help="Worker processes (default: sweep.workers)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="Run an invariant suite")
    p.add_argument("--suite", required=True, choices=sorted(SUITES) + ["all"])
    p.add_argument("--out", default=None, help="Write the JSON result here instead of stdout")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("psi-check", help="Resolvent corrector ladder over decay rates")
    p.add_argument("--config", required=True)
    p.add_argument("--eps", type=float, default=None, help="eps (default: smallest in the sweep ladder)")
    p.set_defaults(func=cmd_psi_check)

    p = sub.add_parser("report", help="Render a sweep directory as markdown")
    p.add_argument("--in", dest="inp", required=True, help="Sweep output directory")
    p.add_argument("--out", required=True, help="Markdown file to write")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (BrinkmanError, FileNotFoundError, ValueError) as e:
        log_message(f"❌ {e}")
        log_message(f"Traceback:\n{traceback.format_exc()}", to_console=False)
        return 2
    finally:
        close_log_file()


if __name__ == "__main__":
    sys.exit(main())
