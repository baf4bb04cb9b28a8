"""Checkpoint container: one ``.npz`` archive written atomically.

Keys: ``param/*`` and ``mask/*`` (approximator), ``adam/*`` (optimizer),
``lagrange/mu``, ``lagrange/vbar``, ``lagrange/expert_values``, ``fe/psi``
and ``meta`` (a JSON string with format version, config, config hash,
iteration and any extra fields).
"""

from __future__ import annotations

import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import ConfigError

FORMAT_VERSION = 1


def write_atomic(path: str | Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_arrays(path: str | Path, arrays: dict[str, np.ndarray], meta: dict) -> None:
    buf = io.BytesIO()
    payload = dict(arrays)
    payload["meta"] = np.array(json.dumps(dict(meta, format_version=FORMAT_VERSION), sort_keys=True))
    np.savez(buf, **payload)
    write_atomic(path, buf.getvalue())


def load_arrays(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"checkpoint not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as z:
            arrays = {k: z[k] for k in z.files}
    except (OSError, ValueError) as exc:
        raise ConfigError(f"unreadable checkpoint {path}: {exc}") from None
    if "meta" not in arrays:
        raise ConfigError(f"{path} is not a checkpoint (no meta record)")
    meta = json.loads(str(arrays.pop("meta")))
    if meta.get("format_version") != FORMAT_VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint version {meta.get('format_version')}")
    return arrays, meta
