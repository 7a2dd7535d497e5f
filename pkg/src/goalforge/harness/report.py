"""Reporting: aggregate table (CSV + aligned text), learning-curve SVGs, and
percent-improvement summaries over the unfiltered baseline."""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from .pipeline import METRICS_HEADER

METHOD_ORDER = ("pi-rig", "rig", "oracle")
ENV_ORDER = ("pusher2", "reacher2", "pickplace2")


@dataclass
class MetricsRow:
    method: str
    env: str
    seed: int
    epoch: int
    vae_dist: float
    image_dist: float
    object_dist: float
    goal_feasibility_rate: float
    wall_clock_s: float


def percent_improvement(baseline: float, ours: float) -> float:
    """(baseline - ours) / baseline * 100; positive means we beat the baseline."""
    if baseline == 0.0:
        raise ConfigError("percent improvement undefined for baseline 0")
    return (baseline - ours) / baseline * 100.0


def parse_metrics_file(path: str | Path) -> list[MetricsRow]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != METRICS_HEADER:
        raise ConfigError(f"{path}: line 1: bad or missing metrics header")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 9:
            raise ConfigError(f"{path}: line {lineno}: expected 9 fields, got {len(parts)}")
        try:
            rows.append(MetricsRow(
                method=parts[0], env=parts[1], seed=int(parts[2]), epoch=int(parts[3]),
                vae_dist=float(parts[4]), image_dist=float(parts[5]),
                object_dist=float(parts[6]), goal_feasibility_rate=float(parts[7]),
                wall_clock_s=float(parts[8])))
        except ValueError as e:
            raise ConfigError(f"{path}: line {lineno}: {e}") from None
    return rows


def final_rows(rows: list[MetricsRow]) -> list[MetricsRow]:
    """The last-epoch row of every (method, env, seed)."""
    best: dict = {}
    for r in rows:
        key = (r.method, r.env, r.seed)
        if key not in best or r.epoch > best[key].epoch:
            best[key] = r
    return list(best.values())


def aggregate(rows: list[MetricsRow]) -> dict:
    """(method, env) -> dict of metric means/stds over seeds (final epoch)."""
    groups = defaultdict(list)
    for r in final_rows(rows):
        groups[(r.method, r.env)].append(r)
    table = {}
    for key, rs in groups.items():
        table[key] = {
            "vae_dist": float(np.mean([r.vae_dist for r in rs])),
            "image_dist": float(np.mean([r.image_dist for r in rs])),
            "object_dist": float(np.mean([r.object_dist for r in rs])),
            "object_dist_std": float(np.std([r.object_dist for r in rs])),
            "goal_feasibility_rate": float(np.mean([r.goal_feasibility_rate for r in rs])),
            "n_seeds": len(rs),
        }
    return table


def _fmt(x: float) -> str:
    return "N/A" if np.isnan(x) else f"{x:.3f}"


def write_table(table: dict, out_dir: Path) -> tuple[Path, Path]:
    envs = [e for e in ENV_ORDER if any(k[1] == e for k in table)]
    methods = [m for m in METHOD_ORDER if any(k[0] == m for k in table)]
    csv_path = out_dir / "report_table.csv"
    with open(csv_path, "w") as fh:
        fh.write("method," + ",".join(
            f"{e}_vae_dist,{e}_image_dist,{e}_object_dist" for e in envs) + "\n")
        for m in methods:
            cells = []
            for e in envs:
                agg = table.get((m, e))
                if agg is None:
                    cells += ["", "", ""]
                else:
                    cells += [f"{agg['vae_dist']:.6f}" if not np.isnan(agg["vae_dist"]) else "",
                              f"{agg['image_dist']:.6f}" if not np.isnan(agg["image_dist"]) else "",
                              f"{agg['object_dist']:.6f}"]
            fh.write(m + "," + ",".join(cells) + "\n")

    txt_path = out_dir / "report_table.txt"
    with open(txt_path, "w") as fh:
        fh.write("Distance metrics across environments (means over seeds, final epoch)\n\n")
        header = f"{'Method':<10}"
        for e in envs:
            header += f"| {e + ' VAE':>14} {'Image':>10} {'Object':>10} "
        fh.write(header + "\n")
        fh.write("-" * len(header) + "\n")
        for m in methods:
            line = f"{m:<10}"
            for e in envs:
                agg = table.get((m, e))
                if agg is None:
                    line += f"| {'-':>14} {'-':>10} {'-':>10} "
                else:
                    line += (f"| {_fmt(agg['vae_dist']):>14} {_fmt(agg['image_dist']):>10} "
                             f"{_fmt(agg['object_dist']):>10} ")
            fh.write(line + "\n")
    return csv_path, txt_path


def write_improvements(table: dict, out_dir: Path) -> Path:
    """Percent improvement of each method over the 'rig' baseline (object dist)."""
    path = out_dir / "improvements.csv"
    with open(path, "w") as fh:
        fh.write("env,method,baseline_object_dist,object_dist,improvement_pct\n")
        for e in ENV_ORDER:
            base = table.get(("rig", e))
            if base is None:
                continue
            for m in METHOD_ORDER:
                if m == "rig" or (m, e) not in table:
                    continue
                ours = table[(m, e)]["object_dist"]
                pct = percent_improvement(base["object_dist"], ours)
                fh.write(f"{e},{m},{base['object_dist']:.6f},{ours:.6f},{pct:.1f}\n")
    return path


def write_curves(rows: list[MetricsRow], out_dir: Path) -> list[Path]:
    """Per-env SVG: mean +- std of object_dist vs epoch, one line per method."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []
    by_env = defaultdict(list)
    for r in rows:
        by_env[r.env].append(r)
    for env, env_rows in sorted(by_env.items()):
        fig, ax = plt.subplots(figsize=(6, 4))
        for method in METHOD_ORDER:
            pts = defaultdict(list)
            for r in env_rows:
                if r.method == method:
                    pts[r.epoch].append(r.object_dist)
            if not pts:
                continue
            epochs = sorted(pts)
            mean = np.array([np.mean(pts[e]) for e in epochs])
            std = np.array([np.std(pts[e]) for e in epochs])
            ax.plot(epochs, mean, label=method, marker="o", markersize=3)
            ax.fill_between(epochs, mean - std, mean + std, alpha=0.2)
        ax.set_xlabel("epoch")
        ax.set_ylabel("final distance to goal (object, m)")
        ax.set_title(env)
        ax.legend()
        fig.tight_layout()
        path = out_dir / f"curves_{env}.svg"
        fig.savefig(path)
        plt.close(fig)
        paths.append(path)
    return paths


def cmd_report(metrics_files: list[str | Path], out_dir: str | Path) -> dict:
    if not metrics_files:
        raise ConfigError("report needs at least one metrics file")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for f in metrics_files:
        if not Path(f).exists():
            raise FileNotFoundError(f)
        rows.extend(parse_metrics_file(f))
    table = aggregate(rows)
    csv_path, txt_path = write_table(table, out_dir)
    imp_path = write_improvements(table, out_dir)
    curve_paths = write_curves(rows, out_dir)
    summary = {
        "table_csv": str(csv_path), "table_txt": str(txt_path),
        "improvements_csv": str(imp_path),
        "curves": [str(p) for p in curve_paths],
        "n_rows": len(rows),
    }
    (out_dir / "report_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary
