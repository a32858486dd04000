"""CSV/JSON writers and the output manifest.

Floats are written with ``repr`` (shortest round-trip form), which makes the
files byte-identical whenever the underlying arrays are bit-identical.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

MANIFEST_NAME = "manifest.json"


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v + 0.0)
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_plain(obj), fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_trajectories(path, times, states, s=None, sample_ids=None):
    """Long-format dump: ``sample_id,node_index,t,s,x_1..x_d``.

    ``states`` has shape (K+1, M, d); rows are grouped by sample.
    """
    states = np.asarray(states, dtype=float)
    if states.ndim == 2:
        states = states[:, None, :]
    K1, M, d = states.shape
    ids = range(M) if sample_ids is None else sample_ids
    s = np.full(K1, np.nan) if s is None else np.asarray(s, dtype=float)
    header = ["sample_id", "node_index", "t", "s"] + [f"x_{k + 1}" for k in range(d)]

    def rows():
        for j, sid in enumerate(ids):
            for k in range(K1):
                yield [int(sid), k, float(times[k]), float(s[k]), *states[k, j]]

    write_csv(path, header, rows())


def write_terminals(path, X, report):
    """``sample_id,x_1..x_d,nearest_data_index,distance,boundary_distance``."""
    X = np.asarray(X, dtype=float)
    d = X.shape[1]
    header = (["sample_id"] + [f"x_{k + 1}" for k in range(d)]
              + ["nearest_data_index", "distance", "boundary_distance"])
    rows = ([i, *X[i], int(report.nearest_index[i]), float(report.distance[i]),
             float(report.boundary_distance[i])] for i in range(X.shape[0]))
    write_csv(path, header, rows)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def config_hash(config: dict) -> str:
    blob = json.dumps(_plain(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def write_manifest(out_dir, files, config, extra=None):
    """List every written file with its size and sha256, plus the config hash."""
    out_dir = Path(out_dir)
    entries = []
    for f in sorted({Path(f).resolve() for f in files}):
        entries.append({"path": f.relative_to(out_dir.resolve()).as_posix(),
                        "size": f.stat().st_size, "sha256": sha256_file(f)})
    manifest = {"config_sha256": config_hash(config), "files": entries}
    manifest.update(extra or {})
    write_json(out_dir / MANIFEST_NAME, manifest)
    return manifest
