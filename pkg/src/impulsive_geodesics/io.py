"""Writers for trajectories, reports and plot data.

JSON is written with sorted keys and a fixed float format (``repr``) so that
the same inputs give byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math
import re
from pathlib import Path

import numpy as np


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj) + 0.0  # folds -0.0 into 0.0
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj):
    return json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n"


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))
    return path


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return path


def read_csv(path):
    """Header and float rows of a CSV written by :func:`write_csv`."""
    with Path(path).open(newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = np.array([[float(x) for x in row] for row in r])
    return header, rows


class Layout:
    """``<out>/<scenario-id>/{trajectories,reports,plotdata}``."""

    def __init__(self, out, scenario_id):
        self.root = Path(out) / scenario_id

    @property
    def trajectories(self):
        return self.root / "trajectories"

    @property
    def reports(self):
        return self.root / "reports"

    @property
    def plotdata(self):
        return self.root / "plotdata"


def eps_tag(eps):
    return f"eps_{eps:.3e}"


def trajectory_payload(traj, provenance):
    cols = traj.columns()
    rows = traj.rows()
    n = traj.dim
    return {
        "columns": cols,
        "u": rows[:, 0],
        "v": rows[:, 1],
        "vdot": rows[:, 2],
        "x": rows[:, 3:3 + n],
        "xdot": rows[:, 3 + n:],
        "eps": traj.eps,
        "stats": dict(traj.stats),
        "provenance": {**traj.meta, **provenance},
    }


def write_trajectory(directory, traj, fmt, provenance):
    directory = Path(directory)
    stem = eps_tag(traj.eps)
    if fmt == "csv":
        return write_csv(directory / f"{stem}.csv", traj.columns(), traj.rows())
    return write_json(directory / f"{stem}.json", trajectory_payload(traj, provenance))


def sweep_error_rows(report):
    points = sorted({p for r in report.rows for p in r["v_err_at"]}, key=float)
    header = ["eps", "sup_x_err"] + [f"v_err_at_{p}" for p in points] + ["jump_err"]
    rows = []
    for r in report.rows:
        rows.append([r["eps"], r["sup_x_err"]] + [r["v_err_at"].get(p, math.nan) for p in points]
                    + [r["jump_err"]])
    return header, rows


def write_plotdata(directory, name, eps, err):
    """Two columns ``log10(eps) log10(err)``; non-positive errors are skipped.

    The file name is ``name`` with characters outside ``[A-Za-z0-9_.-]``
    replaced, so ``pairing[bump]`` is written as ``pairing_bump.dat``.
    """
    stem = re.sub(r"[^A-Za-z0-9_.-]+", "_", name).strip("_")
    path = Path(directory) / f"{stem}.dat"
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# log10(eps) log10({name})"]
    for e, r in zip(eps, err):
        if r > 0 and math.isfinite(r):
            lines.append(f"{math.log10(e)!r} {math.log10(r)!r}")
    path.write_text("\n".join(lines) + "\n")
    return path
