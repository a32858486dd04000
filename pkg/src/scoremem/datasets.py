"""Dataset generators and a plain CSV file format.

Generators are addressed either by a dict (``{"generator": "gaussian2d",
"n": 20, "seed": 0}``) or by a compact string used on the command line
(``gaussian2d:n=20,seed=0``, ``symmetric2``, ``file:path/to/data.csv``).

File format: a header row ``x_1,...,x_d[,y_1,...,y_m]`` followed by one row
per point, floats written with round-trip precision.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import ConfigError, InvalidDatasetError
from .scores import Dataset

DEFAULT_SEED = 0

SYMMETRIC2 = np.array([[1.0, 0.0], [-1.0, 0.0]])
SYMMETRIC4 = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])


def gaussian2d(n=20, seed=DEFAULT_SEED) -> Dataset:
    """``n`` i.i.d. standard-normal points in the plane."""
    n = int(n)
    if n < 1:
        raise ConfigError("gaussian2d needs n >= 1")
    pts = np.random.default_rng(int(seed)).standard_normal((n, 2))
    return Dataset(pts, name=f"gaussian2d(n={n},seed={seed})")


def symmetric2() -> Dataset:
    return Dataset(SYMMETRIC2, name="symmetric2")


def symmetric4() -> Dataset:
    return Dataset(SYMMETRIC4, name="symmetric4")


def paired_linear(n=20, seed=DEFAULT_SEED, step=1.0, a=(1.0, 0.5), noise=0.1) -> Dataset:
    """Pairs ``(x0, y)`` with ``x0 ~ N(0, I_2)`` and a quantized scalar observation.

    ``y = step * round((a . x0 + noise * xi) / step)``; quantization makes
    several points share each observed value, so conditional groups exist.
    """
    n = int(n)
    if n < 1:
        raise ConfigError("paired-linear needs n >= 1")
    if not step > 0:
        raise ConfigError("paired-linear needs step > 0")
    rng = np.random.default_rng(int(seed))
    x0 = rng.standard_normal((n, 2))
    y = x0 @ np.asarray(a, dtype=float) + noise * rng.standard_normal(n)
    y = step * np.round(y / step)
    return Dataset(x0, y[:, None] + 0.0, name=f"paired-linear(n={n},seed={seed})")


def read_dataset(path) -> Dataset:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InvalidDatasetError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    xcols = [i for i, h in enumerate(header) if h.startswith("x_")]
    ycols = [i for i, h in enumerate(header) if h.startswith("y_")]
    if not xcols or len(xcols) + len(ycols) != len(header):
        raise InvalidDatasetError(f"{path}: header must be x_1..x_d[,y_1..y_m]")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as err:
        raise InvalidDatasetError(f"{path}: {err}") from None
    if data.ndim != 2 or data.shape[0] == 0 or data.shape[1] != len(header):
        raise InvalidDatasetError(f"{path}: expected {len(header)} columns per row")
    obs = data[:, ycols] if ycols else None
    return Dataset(data[:, xcols], obs, name=path.stem)


def write_dataset(dataset: Dataset, path):
    header = [f"x_{k + 1}" for k in range(dataset.d)] + [f"y_{k + 1}" for k in range(dataset.m)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for n in range(dataset.N):
            row = list(dataset.points[n])
            if dataset.m:
                row += list(dataset.observations[n])
            w.writerow([repr(float(v)) for v in row])


GENERATORS = {
    "gaussian2d": gaussian2d,
    "symmetric2": symmetric2,
    "symmetric4": symmetric4,
    "paired-linear": paired_linear,
}


def parse_spec(spec: str) -> dict:
    """``"name:k=v,k=v"`` -> ``{"generator": name, k: v, ...}``."""
    name, _, rest = spec.partition(":")
    name = name.strip()
    if name == "file":
        if not rest:
            raise ConfigError("file spec needs a path: file:<path>")
        return {"file": rest}
    out = {"generator": name}
    for item in filter(None, (p.strip() for p in rest.split(","))):
        key, eq, val = item.partition("=")
        if not eq:
            raise ConfigError(f"bad dataset option {item!r}; expected key=value")
        try:
            out[key.strip()] = int(val)
        except ValueError:
            try:
                out[key.strip()] = float(val)
            except ValueError:
                out[key.strip()] = val
    return out


def gen_dataset(spec, base_dir=None) -> Dataset:
    """Build a dataset from a spec dict or spec string."""
    if isinstance(spec, str):
        spec = parse_spec(spec)
    spec = dict(spec)
    if "file" in spec:
        path = Path(spec["file"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return read_dataset(path)
    name = spec.pop("generator", None)
    if name not in GENERATORS:
        raise ConfigError(f"unknown dataset generator {name!r}; choose from {sorted(GENERATORS)}")
    try:
        return GENERATORS[name](**spec)
    except TypeError as err:
        raise ConfigError(f"{name}: {err}") from None
