"""
Report files: per-run trajectory CSV, sweep CSVs, JSON manifests and a
markdown summary rendered with tabulate.

CSV content depends only on (config, seed); wall time and timestamps go into
the manifest so sweep CSVs stay byte-identical across worker counts.
"""

import csv
import json
import platform
from importlib import metadata
from pathlib import Path
from typing import Dict, List, Optional

from tabulate import tabulate

from src.harness.ensemble import SweepReport
from src.solver.slowsolver import Trajectory
from src.utils.io import utc_now_iso, write_csv_rows, write_json

SWEEP_CSV = "sweep.csv"
SUMMARY_CSV = "sweep_summary.csv"
CHECKS_JSON = "checks.json"
MANIFEST_JSON = "manifest.json"

SWEEP_HEADER = ["epsilon", "path", "error", "s1", "s2", "s3"]
SUMMARY_HEADER = [
    "epsilon", "n_paths", "median", "mean", "q25", "q75", "prob_exceed",
    "s1_median_abs", "s2_median_abs", "s3", "fast_energy_median", "sup_v_median",
    "v_integral_median", "h2_integral_median",
]

_PACKAGES = ("numpy", "scipy", "pydantic", "PyYAML", "python-dotenv", "tabulate", "fastapi")


def package_versions() -> Dict[str, str]:
    versions = {"python": platform.python_version()}
    for name in _PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "not installed"
    return versions


def _blank(value: Optional[float]):
    return "" if value is None else float(value)


def write_trajectory_csv(path: Path, trajectory: Trajectory) -> Path:
    n_modes = trajectory.coeffs.shape[1]
    header = ["t"] + [f"a_{k}" for k in range(1, n_modes + 1)] + ["norm_H", "norm_V"]
    rows = (
        [float(t)] + [float(c) for c in coeffs] + [float(h), float(v)]
        for t, coeffs, h, v in zip(trajectory.times, trajectory.coeffs, trajectory.norm_h, trajectory.norm_v)
    )
    write_csv_rows(path, header, rows)
    return Path(path)


def write_sweep_csv(path: Path, report: SweepReport) -> Path:
    s3_by_eps = {s.epsilon: s.s3 for s in report.summaries}
    rows = []
    for eps in report.epsilons:
        for r in sorted(report.paths[eps], key=lambda r: r.path):
            rows.append([float(eps), r.path, float(r.error), _blank(r.s1), _blank(r.s2), _blank(s3_by_eps[eps])])
    write_csv_rows(path, SWEEP_HEADER, rows)
    return Path(path)


def write_summary_csv(path: Path, report: SweepReport) -> Path:
    rows = [
        [float(s.epsilon), s.n_paths, s.median, s.mean, s.q25, s.q75, s.prob_exceed,
         _blank(s.s1_median_abs), _blank(s.s2_median_abs), _blank(s.s3), s.fast_energy_median, s.sup_v_median,
         s.v_integral_median, s.h2_integral_median]
        for s in report.summaries
    ]
    write_csv_rows(path, SUMMARY_HEADER, rows)
    return Path(path)


def build_manifest(config_hash: str, seeds: dict, wall_seconds: float, extra: Optional[dict] = None) -> dict:
    manifest = {
        "config_hash": config_hash,
        "seeds": seeds,
        "versions": package_versions(),
        "wall_time_seconds": round(float(wall_seconds), 3),
        "created_at": utc_now_iso(),
    }
    if extra:
        manifest.update(extra)
    return manifest


def write_sweep_outputs(out_dir: Path, report: SweepReport, n_paths: int) -> Dict[str, Path]:
    """Write sweep.csv, sweep_summary.csv, checks.json and manifest.json into out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "sweep": write_sweep_csv(out_dir / SWEEP_CSV, report),
        "summary": write_summary_csv(out_dir / SUMMARY_CSV, report),
    }
    write_json(out_dir / CHECKS_JSON, {
        "delta": report.delta,
        "passed": report.passed,
        "checks": [c.to_dict() for c in report.checks],
    })
    paths["checks"] = out_dir / CHECKS_JSON
    manifest = build_manifest(
        report.config_hash,
        {"base_seed": report.base_seed, "path_indices": list(range(n_paths)), "stream": "fast_noise"},
        report.runtime_seconds,
        {"epsilons": report.epsilons, "delta": report.delta},
    )
    write_json(out_dir / MANIFEST_JSON, manifest)
    paths["manifest"] = out_dir / MANIFEST_JSON
    return paths


def read_csv(path: Path) -> List[dict]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


def load_sweep_summary(directory: Path) -> List[dict]:
    """Parsed sweep_summary.csv rows (floats where possible)."""
    path = Path(directory) / SUMMARY_CSV
    if not path.exists():
        raise FileNotFoundError(f"no {SUMMARY_CSV} in {directory}")
    rows = []
    for row in read_csv(path):
        parsed = {}
        for key, value in row.items():
            if value == "":
                parsed[key] = None
            elif key == "n_paths":
                parsed[key] = int(value)
            else:
                parsed[key] = float(value)
        rows.append(parsed)
    return rows


def render_summary(rows: List[dict], checks: Optional[List[dict]] = None) -> str:
    """Markdown summary of a sweep (per-eps table plus recorded checks)."""
    table_rows = [
        [r["epsilon"], r["n_paths"], r["median"], r["prob_exceed"], r.get("s1_median_abs"), r.get("s3"),
         r.get("fast_energy_median")]
        for r in rows
    ]
    text = "## Convergence sweep\n\n" + tabulate(
        table_rows,
        headers=["eps", "paths", "median error", "P(error > delta)", "|S1| median", "S3", "sup |v|^2 median"],
        tablefmt="github",
        floatfmt=".4g",
        missingval="-",
    )
    if checks:
        check_rows = [[c["name"], "pass" if c["passed"] else "FAIL", c["value"], c.get("threshold")] for c in checks]
        text += "\n\n## Checks\n\n" + tabulate(
            check_rows, headers=["check", "result", "value", "threshold"], tablefmt="github",
            floatfmt=".4g", missingval="-",
        )
    return text + "\n"


def summarize_directory(directory: Path) -> str:
    directory = Path(directory)
    rows = load_sweep_summary(directory)
    checks = None
    checks_path = directory / CHECKS_JSON
    if checks_path.exists():
        checks = json.loads(checks_path.read_text(encoding="utf-8")).get("checks")
    return render_summary(rows, checks)
