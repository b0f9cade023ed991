"""Parameter checkpoints: flat float64 binary plus a plain-text manifest.

The data file concatenates every parameter's row-major values in manifest
order. The sidecar ``<path>.manifest`` lists one parameter per line:
``name shape offset count`` with the shape comma-separated and the offset in
values (not bytes). The same format is shared by every module.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

MANIFEST_SUFFIX = ".manifest"


def save_params(params: dict[str, np.ndarray], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = sorted(params)
    lines = []
    offset = 0
    with open(path, "wb") as fh:
        for name in names:
            arr = np.asarray(params[name], dtype=np.float64)
            if " " in name:
                raise ValueError(f"save_params: parameter name {name!r} contains a space")
            shape = ",".join(str(n) for n in arr.shape) or "scalar"
            lines.append(f"{name} {shape} {offset} {arr.size}")
            fh.write(arr.tobytes(order="C"))
            offset += arr.size
    Path(str(path) + MANIFEST_SUFFIX).write_text("\n".join(lines) + "\n")
    return path


def load_params(path) -> dict[str, np.ndarray]:
    path = Path(path)
    manifest = Path(str(path) + MANIFEST_SUFFIX)
    if not manifest.exists():
        raise FileNotFoundError(f"load_params: missing manifest {manifest}")
    flat = np.fromfile(path, dtype=np.float64)
    params: dict[str, np.ndarray] = {}
    for line in manifest.read_text().splitlines():
        if not line.strip():
            continue
        name, shape_s, offset_s, count_s = line.split()
        offset, count = int(offset_s), int(count_s)
        if offset + count > flat.size:
            raise ValueError(f"load_params: manifest entry {name} overruns the data file")
        shape = () if shape_s == "scalar" else tuple(int(n) for n in shape_s.split(","))
        params[name] = flat[offset:offset + count].reshape(shape).copy()
    return params
