"""Bit-exact file formats.

Matrices travel as raw little-endian float64 blobs, either with the shape
declared externally (the dataset's series) or with a one-line sidecar
descriptor (state files). Scalars live in key=value text files; reports are
CSV with a schema comment on the first line. All text uses LF endings.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DatasetError, StateError


def write_raw_f64(path, arr: np.ndarray) -> None:
    Path(path).write_bytes(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_raw_f64(path, shape: tuple) -> np.ndarray:
    data = Path(path).read_bytes()
    expected = 8 * int(np.prod(shape))
    if len(data) != expected:
        raise DatasetError(
            f"{path}: expected {expected} bytes for shape {shape}, found {len(data)}")
    return np.frombuffer(data, dtype="<f8").reshape(shape).copy()


def write_f64(path, arr: np.ndarray) -> None:
    """Blob plus `.shape` sidecar with the dimensions."""
    arr = np.asarray(arr, dtype=float)
    write_raw_f64(path, arr)
    Path(str(path) + ".shape").write_text(
        " ".join(str(d) for d in arr.shape) + "\n")


def read_f64(path) -> np.ndarray:
    sidecar = Path(str(path) + ".shape")
    if not sidecar.exists():
        raise StateError(f"missing shape sidecar for {path}")
    shape = tuple(int(tok) for tok in sidecar.read_text().split())
    try:
        return read_raw_f64(path, shape)
    except DatasetError as exc:
        raise StateError(str(exc)) from exc


def write_kv(path, entries: dict) -> None:
    lines = []
    for key, value in entries.items():
        if isinstance(value, float):
            # repr of a builtin float round-trips the double exactly
            lines.append(f"{key}={float(value)!r}")
        else:
            lines.append(f"{key}={value}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_kv(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition("=")
        out[key] = value
    return out


def write_parcellation(path, voxel_ids, coords, rois) -> None:
    lines = ["voxel_id,x,y,z,roi"]
    for vid, (x, y, z), roi in zip(voxel_ids, coords, rois):
        lines.append(f"{int(vid)},{int(x)},{int(y)},{int(z)},{int(roi)}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_parcellation(path):
    text = Path(path).read_text()
    lines = [ln for ln in text.split("\n") if ln]
    if not lines or lines[0] != "voxel_id,x,y,z,roi":
        raise DatasetError(f"{path}: bad or missing parcellation header")
    rows = []
    for ln in lines[1:]:
        try:
            rows.append([int(tok) for tok in ln.split(",")])
        except ValueError as exc:
            raise DatasetError(f"{path}: non-integer parcellation entry: {ln}") from exc
    arr = np.asarray(rows, dtype=int)
    return arr[:, 0], arr[:, 1:4], arr[:, 4]


def write_meta(path, V, T, tr_seconds, sessions, task_blocks) -> None:
    meta = {
        "V": int(V),
        "T": int(T),
        "tr_seconds": float(tr_seconds),
        "sessions": [[int(a), int(b)] for a, b in sessions],
        "task_blocks": [[int(a), int(b)] for a, b in task_blocks],
    }
    Path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_meta(path) -> dict:
    try:
        meta = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path}: invalid JSON") from exc
    for key in ("V", "T", "tr_seconds", "sessions", "task_blocks"):
        if key not in meta:
            raise DatasetError(f"{path}: missing key {key}")
    return meta


def write_report(path, schema: str, header: list, rows: list) -> None:
    lines = [f"# schema={schema} version=1", ",".join(header)]
    for row in rows:
        cells = []
        for cell in row:
            if isinstance(cell, float):
                cells.append(repr(cell))
            else:
                cells.append(str(cell))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")
