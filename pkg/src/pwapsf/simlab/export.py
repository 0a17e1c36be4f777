"""Plain-text outputs of simulation runs.

The trajectory CSV holds only deterministic columns so that identical runs
produce identical files; wall-clock timings go to a separate CSV.
"""
import csv
from pathlib import Path
from typing import Dict, Iterable, List

import numpy as np

from .runner import RunMetrics, RunResult

FLOAT = "%.17g"


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return FLOAT % float(v)


def trajectory_columns(res: RunResult) -> List[str]:
    n = res.states.shape[1]
    m = res.inputs.shape[1]
    return (["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{j + 1}" for j in range(m)]
            + [f"u_ref{j + 1}" for j in range(m)]
            + ["h_X", "h_b", "margin", "lambda", "region", "fallback"])


def write_trajectory(res: RunResult, path):
    """One row per sample; the input columns of the final state are empty."""
    path = Path(path)
    steps = len(res.inputs)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(trajectory_columns(res))
        for k in range(steps + 1):
            row = [_fmt(res.times[k])] + [_fmt(v) for v in res.states[k]]
            if k < steps:
                row += [_fmt(v) for v in res.inputs[k]] + [_fmt(v) for v in res.u_ref[k]]
            else:
                row += [""] * (2 * res.inputs.shape[1])
            row += [_fmt(res.h_X[k]), _fmt(res.h_b[k])]
            if k < steps:
                row += [_fmt(res.margin[k]), _fmt(res.lam[k]), _fmt(res.region[k]), _fmt(res.fallback[k])]
            else:
                row += ["", "", "", ""]
            w.writerow(row)
    return path


def write_timing(res: RunResult, path):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "call_us", "solve_us"])
        for k in range(len(res.inputs)):
            w.writerow([_fmt(res.times[k]), "%.3f" % res.call_us[k], "%.3f" % res.solve_us[k]])
    return path


def write_metrics(metrics: RunMetrics, path, extra: Dict = None):
    """key = value lines."""
    path = Path(path)
    items = dict(metrics.as_dict())
    if extra:
        items.update(extra)
    path.write_text("".join(f"{k} = {v}\n" for k, v in items.items()))
    return path


def read_metrics(path) -> Dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def write_table(rows: Iterable[Dict], path):
    rows = list(rows)
    path = Path(path)
    with path.open("w", newline="") as fh:
        if not rows:
            return path
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) if isinstance(v, (float, int, np.floating, np.integer)) else v
                        for k, v in r.items()})
    return path


def write_gnuplot_runs(runs: Dict[str, RunResult], path, columns=None):
    """Whitespace-separated blocks, one per run, separated by two blank lines.

    Each block starts with a '# name' comment so that gnuplot's ``index``
    selects runs in insertion order.
    """
    path = Path(path)
    lines = []
    for name, res in runs.items():
        steps = len(res.inputs)
        lines.append(f"# {name}")
        n, m = res.states.shape[1], res.inputs.shape[1]
        lines.append("# t " + " ".join(f"x{i + 1}" for i in range(n)) + " "
                     + " ".join(f"u{j + 1}" for j in range(m)) + " "
                     + " ".join(f"ref{j + 1}" for j in range(m)) + " h_X")
        for k in range(steps):
            vals = [res.times[k], *res.states[k], *res.inputs[k], *res.u_ref[k], res.h_X[k]]
            lines.append(" ".join("%.10g" % v for v in vals))
        lines.extend(["", ""])
    path.write_text("\n".join(lines) + "\n")
    return path


def write_gnuplot_sweep(rows: Iterable[Dict], path):
    """One block per controller: T tracking_error mean_solve_us mean_us."""
    rows = list(rows)
    path = Path(path)
    lines = []
    for ctrl in dict.fromkeys(r["controller"] for r in rows):
        lines.append(f"# {ctrl}")
        lines.append("# T tracking_error mean_solve_us mean_us")
        for r in rows:
            if r["controller"] == ctrl:
                lines.append("%.10g %.10g %.10g %.10g" % (r["T"], r["tracking_error"], r["mean_solve_us"], r["mean_us"]))
        lines.extend(["", ""])
    path.write_text("\n".join(lines) + "\n")
    return path
