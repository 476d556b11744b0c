"""Point-cloud files: CSV with header ``x_1..x_n,mass`` or JSON
``{"dimension", "points", "masses"}``."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .measure import DiscreteMeasure


def write_csv(mu: DiscreteMeasure, path) -> None:
    header = [f"x_{j + 1}" for j in range(mu.dim)] + ["mass"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for pt, m in zip(mu.points, mu.masses):
            w.writerow([repr(float(c)) for c in pt] + [repr(float(m))])


def read_csv(path) -> DiscreteMeasure:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    dim = len(header) - 1
    if dim < 1 or header[-1] != "mass" or header[:-1] != [f"x_{j + 1}" for j in range(dim)]:
        raise ValueError(f"{path}: header must be x_1,...,x_n,mass")
    body = [r for r in rows[1:] if r]
    if not body:
        raise ValueError(f"{path}: no points")
    try:
        data = np.array([[float(v) for v in r] for r in body])
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric entry") from exc
    if data.shape[1] != dim + 1:
        raise ValueError(f"{path}: ragged rows")
    return DiscreteMeasure(data[:, :dim], data[:, dim])


def write_json(mu: DiscreteMeasure, path) -> None:
    Path(path).write_text(json.dumps(mu.to_dict()))


def read_json(path) -> DiscreteMeasure:
    return DiscreteMeasure.from_dict(json.loads(Path(path).read_text()))


def read_cloud(path) -> DiscreteMeasure:
    return read_json(path) if str(path).lower().endswith(".json") else read_csv(path)


def write_cloud(mu: DiscreteMeasure, path) -> None:
    if str(path).lower().endswith(".json"):
        write_json(mu, path)
    else:
        write_csv(mu, path)
