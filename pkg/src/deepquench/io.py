"""CSV and JSON persistence for fields, trajectories and run summaries."""

import csv
import json
import os

import numpy as np

FLOAT_FMT = "%.17g"


def _fmt(x):
    return FLOAT_FMT % x


def write_field_csv(path, field, grid):
    """One spatial field, header ``x[,y],value``, one row per node."""
    field = grid.check(field)
    coords = grid.coordinates()
    header = ["x", "y"][: grid.dimension] + ["value"]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for i in range(grid.n_nodes):
            wr.writerow([_fmt(c[i]) for c in coords] + [_fmt(field[i])])


def read_field_csv(path):
    """Returns ``(coords, values)``; coords has one column per axis."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, :-1], data[:, -1]


def write_series_csv(path, series, times):
    """Time series with header ``t,<node columns>`` and one row per level."""
    series = np.asarray(series, dtype=float)
    if series.ndim == 1:
        series = series[:, None]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["t"] + [f"n{i}" for i in range(series.shape[1])])
        for t, row in zip(times, series):
            wr.writerow([_fmt(t)] + [_fmt(x) for x in row])


def read_series_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1:]


def write_levels(directory, name, series, grid, every=1):
    """Field-per-level files ``<name>_0000.csv``; returns the written names."""
    os.makedirs(directory, exist_ok=True)
    names = []
    last = len(series) - 1
    for k, level in enumerate(series):
        if k % every and k != last:
            continue
        fname = f"{name}_{k:04d}.csv"
        write_field_csv(os.path.join(directory, fname), level, grid)
        names.append(fname)
    return names


def write_trajectory(directory, traj, every=1):
    """Per-level CSVs for phi, w, v and the multiplier xi."""
    files = {}
    for name in ("phi", "w", "v", "xi"):
        files[name] = write_levels(directory, name, getattr(traj, name), traj.grid, every)
    return files


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else repr(x)
    return obj


def write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(to_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)
