"""Deterministic JSON and CSV result files."""

from __future__ import annotations

import csv
import io
import json
import math

import numpy as np

from . import __version__


def _plain(obj):
    """Convert numpy scalars/arrays and non-finite floats for JSON."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def document(command, config, result):
    return {"command": command, "version": __version__, "config": _plain(config),
            "result": _plain(result)}


def dumps_json(doc):
    return json.dumps(_plain(doc), sort_keys=True, indent=2) + "\n"


def dumps_csv(header, columns, rows):
    buf = io.StringIO()
    buf.write("# " + json.dumps(_plain(header), sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def write_text(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def read_csv(path):
    """(header dict, column names, rows of strings)."""
    with open(path) as fh:
        first = fh.readline()
        header = json.loads(first[2:]) if first.startswith("# ") else {}
        reader = csv.reader(fh)
        cols = next(reader)
        return header, cols, list(reader)


def path_csv(paths, header):
    """CSV of walk points: sample, k, t_k, x0, x1, ..."""
    rows = []
    for p in paths:
        times = p.grid.times
        idx = p.seed.sample_index if p.seed is not None else 0
        for k, (tk, pt) in enumerate(zip(times, p.points)):
            rows.append([idx, k, float(tk), *[float(v) for v in pt]])
    D = paths[0].points.shape[1]
    return dumps_csv(header, ["sample", "k", "t_k"] + [f"x{i}" for i in range(D)], rows)


def gnuplot_script(csv_path, title):
    return (f"set title '{title}'\n"
            "set datafile separator ','\n"
            "set logscale xy\n"
            "set xlabel 'n'\nset ylabel 'relative error'\n"
            f"plot '{csv_path}' every ::1 using 1:5 with linespoints title 'rel_error'\n")
