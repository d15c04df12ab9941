"""Binary array dumps: little-endian float32 blob + JSON sidecar.

Every on-disk array in this package uses the same convention: the raw
values live in ``<stem>.f32`` (row-major, little-endian float32) and a
sidecar ``<stem>.json`` records the shape plus caller-supplied metadata.
"""

import json
from pathlib import Path

import numpy as np


def write_f32(stem, array, meta=None):
    """Write ``array`` to ``<stem>.f32`` with a ``<stem>.json`` sidecar.

    Returns the pair of paths that were written.
    """
    stem = Path(stem)
    arr = np.ascontiguousarray(array, dtype="<f4")
    blob_path = stem.with_suffix(".f32")
    sidecar_path = stem.with_suffix(".json")
    blob_path.write_bytes(arr.tobytes())
    sidecar = {"shape": list(arr.shape), "dtype": "float32_le"}
    if meta:
        sidecar.update(meta)
    sidecar_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return blob_path, sidecar_path


def read_f32(stem):
    """Read a blob written by :func:`write_f32`; returns ``(array, sidecar)``."""
    stem = Path(stem)
    sidecar = json.loads(stem.with_suffix(".json").read_text())
    raw = stem.with_suffix(".f32").read_bytes()
    arr = np.frombuffer(raw, dtype="<f4").reshape(sidecar["shape"])
    return arr.astype(np.float64), sidecar
