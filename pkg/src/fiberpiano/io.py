"""Data export: map CSV/JSON, portable graymaps, traces and run manifests."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__

MAP_HEADER = "x_um,y_um,value"


def _num(x) -> str:
    # shortest repr round-trips exactly, so reruns are byte-identical
    return repr(float(x))


def write_map_csv(m, path) -> Path:
    """Row-major scan order: y outer, x inner."""
    path = Path(path)
    lines = [MAP_HEADER]
    for i, y in enumerate(m.ys):
        for j, x in enumerate(m.xs):
            lines.append(f"{_num(x)},{_num(y)},{_num(m.values[i, j])}")
    path.write_text("\n".join(lines) + "\n")
    return path


def read_map_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    xs = np.unique(data[:, 0])
    ys = np.unique(data[:, 1])
    return xs, ys, data[:, 2].reshape(len(ys), len(xs))


def map_document(m, **metadata) -> dict:
    return {
        "kind": m.kind,
        "x_um": [float(x) for x in m.xs],
        "y_um": [float(y) for y in m.ys],
        "values": [[float(v) for v in row] for row in m.values],
        "metadata": {**m.metadata, **metadata},
    }


def write_json(obj, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return path


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def write_pgm(values, path, maxval: int = 255) -> Path:
    """Binary (P5) graymap scaled to the map maximum; row 0 is the top (largest y)."""
    path = Path(path)
    v = np.asarray(values, dtype=float)[::-1]
    top = v.max()
    scaled = np.zeros_like(v) if top <= 0 else v / top
    pixels = np.round(scaled * maxval).astype(np.uint8)
    h, w = pixels.shape
    path.write_bytes(f"P5\n{w} {h}\n{maxval}\n".encode() + pixels.tobytes())
    return path


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    w, h = (int(x) for x in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)


def write_trace_csv(run, path) -> Path:
    path = Path(path)
    lines = ["iteration,best,mean"]
    for i, (b, m) in enumerate(zip(run.trace_best, run.trace_mean)):
        lines.append(f"{i},{_num(b)},{_num(m)}")
    path.write_text("\n".join(lines) + "\n")
    return path


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def run_manifest(cfg, command: str, outputs: dict, **extra) -> dict:
    """Everything needed to replay a run: the full config plus its seeds."""
    return {
        "kind": "run-manifest",
        "command": command,
        "library_version": __version__,
        "config": cfg.to_dict(),
        "config_sha256": cfg.digest(),
        "seeds": cfg.seeds(),
        "outputs": {name: {"file": Path(p).name, "sha256": file_digest(p)}
                    for name, p in sorted(outputs.items())},
        **extra,
    }
