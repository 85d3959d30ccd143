"""Utility evaluations along 1D slices and over 2D grids of raw attribute values."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

DEFAULT_RESOLUTION = 50


def reference_observation(model, data) -> dict:
    """Column-wise median of ``data`` (normally the training split), keyed by column name."""
    model.check_schema(data)
    raw = np.hstack([data.x, data.z])
    return {c: float(v) for c, v in zip(model.input_columns, np.median(raw, axis=0))}


def _evaluate(model, k: int, reference: dict, varied: dict) -> np.ndarray:
    """Utility of alternative ``k`` for rows that vary some columns around ``reference``."""
    cols = model.input_columns
    for name in varied:
        if name not in cols:
            raise KeyError(f"unknown attribute {name!r}")
    n = len(next(iter(varied.values())))
    raw = np.tile([float(reference[c]) for c in cols], (n, 1))
    for name, values in varied.items():
        raw[:, cols.index(name)] = values
    Dx = len(model.x_columns)
    S = np.hstack([model.stats.transform_x(raw[:, :Dx]), model.stats.transform_z(raw[:, Dx:])])
    return model.utility_std(S)[:, k]


def utility_slice(model, k: int, attr: str, value_range, resolution: int = DEFAULT_RESOLUTION,
                  reference: dict | None = None):
    """``[(value, utility), ...]`` at evenly spaced values of ``attr``, others held at ``reference``."""
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    if reference is None:
        raise ValueError("a reference observation is required")
    values = np.linspace(value_range[0], value_range[1], resolution)
    u = _evaluate(model, k, reference, {attr: values})
    return list(zip(values.tolist(), u.tolist()))


@dataclass
class SurfaceGrid:
    attr_a: str
    attr_b: str
    a_values: np.ndarray
    b_values: np.ndarray
    utility: np.ndarray  # (len(a_values), len(b_values))
    alternative: int
    reference: dict
    model_id: str

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([self.attr_a, self.attr_b, "utility"])
        for i, a in enumerate(self.a_values):
            for j, b in enumerate(self.b_values):
                w.writerow([repr(float(a)), repr(float(b)), repr(float(self.utility[i, j]))])
        return buf.getvalue()

    def sidecar(self) -> str:
        return json.dumps({
            "attr_a": self.attr_a,
            "attr_b": self.attr_b,
            "resolution": [len(self.a_values), len(self.b_values)],
            "range_a": [float(self.a_values[0]), float(self.a_values[-1])],
            "range_b": [float(self.b_values[0]), float(self.b_values[-1])],
            "alternative": self.alternative,
            "model": self.model_id,
            "reference_observation": self.reference,
        }, indent=2, sort_keys=True)


def utility_grid(model, k: int, attr_a: str, attr_b: str, range_a, range_b,
                 resolutions=(DEFAULT_RESOLUTION, DEFAULT_RESOLUTION), reference: dict | None = None) -> SurfaceGrid:
    """2D analogue of :func:`utility_slice`; ``utility[i, j]`` is at ``(a_values[i], b_values[j])``."""
    ra, rb = resolutions
    if ra < 2 or rb < 2:
        raise ValueError("resolution must be at least 2")
    if reference is None:
        raise ValueError("a reference observation is required")
    a = np.linspace(range_a[0], range_a[1], ra)
    b = np.linspace(range_b[0], range_b[1], rb)
    A, B = np.meshgrid(a, b, indexing="ij")
    u = _evaluate(model, k, reference, {attr_a: A.ravel(), attr_b: B.ravel()}).reshape(ra, rb)
    model_id = f"{model.spec.scenario}-delta={model.delta!r}"
    return SurfaceGrid(attr_a, attr_b, a, b, u, int(k), dict(reference), model_id)
