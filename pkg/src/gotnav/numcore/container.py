"""Tensor container file: plain-text manifest + little-endian binary blocks.

Layout::

    NCTENSORS 1\n
    meta <key> <json-encoded string value>\n      (zero or more)
    tensor <name> <dtype> <d0,d1,...|->\n         (zero or more; '-' = 0-d)
    end\n
    <raw little-endian blocks, in manifest order>

Supported dtypes: f64, f32, i64, u8.  Writes go through a temp file and an
atomic rename, so a failed save never leaves partial state behind.
"""
from __future__ import annotations

import json
import os
import tempfile

import numpy as np

MAGIC = "NCTENSORS"
VERSION = 1

_DTYPES = {"f64": "<f8", "f32": "<f4", "i64": "<i8", "u8": "|u1"}
_DTYPE_NAMES = {np.dtype(v): k for k, v in _DTYPES.items()}


class ContainerError(IOError):
    """Malformed, truncated, or version-mismatched container file."""


def _dtype_name(arr: np.ndarray) -> str:
    key = arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype
    name = _DTYPE_NAMES.get(np.dtype(key.str.replace(">", "<")))
    if name is None:
        raise ContainerError(f"unsupported dtype {arr.dtype} (use f64/f32/i64/u8)")
    return name


def save_tensors(path: str, tensors: dict[str, np.ndarray],
                 meta: dict[str, str] | None = None) -> None:
    """Write named arrays (insertion order preserved; byte-deterministic)."""
    lines = [f"{MAGIC} {VERSION}"]
    for key, value in (meta or {}).items():
        if " " in key or "\n" in key:
            raise ContainerError(f"meta key may not contain whitespace: {key!r}")
        lines.append(f"meta {key} {json.dumps(str(value))}")
    arrays = []
    for name, arr in tensors.items():
        if " " in name or "\n" in name:
            raise ContainerError(f"tensor name may not contain whitespace: {name!r}")
        arr = np.asarray(arr)
        dname = _dtype_name(arr)
        arr = np.ascontiguousarray(arr.astype(_DTYPES[dname], copy=False))
        dims = ",".join(str(d) for d in arr.shape) if arr.ndim else "-"
        lines.append(f"tensor {name} {dname} {dims}")
        arrays.append(arr)
    lines.append("end")
    manifest = ("\n".join(lines) + "\n").encode("utf-8")

    dirpath = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=dirpath, prefix=".nct-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(manifest)
            for arr in arrays:
                f.write(arr.tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_tensors(path: str) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    """Read back (tensors, meta); raises ContainerError on any corruption."""
    with open(path, "rb") as f:
        blob = f.read()
    nl = blob.find(b"\n")
    if nl < 0:
        raise ContainerError("missing header line")
    header = blob[:nl].decode("utf-8", errors="replace").split()
    if len(header) != 2 or header[0] != MAGIC:
        raise ContainerError(f"bad magic in {path!r}")
    if header[1] != str(VERSION):
        raise ContainerError(f"container version {header[1]} unsupported (expected {VERSION})")

    meta: dict[str, str] = {}
    entries: list[tuple[str, str, tuple]] = []
    pos = nl + 1
    while True:
        nl = blob.find(b"\n", pos)
        if nl < 0:
            raise ContainerError("manifest truncated before 'end'")
        line = blob[pos:nl].decode("utf-8", errors="replace")
        pos = nl + 1
        if line == "end":
            break
        parts = line.split(" ", 2)
        if parts[0] == "meta" and len(parts) == 3:
            try:
                meta[parts[1]] = json.loads(parts[2])
            except json.JSONDecodeError as e:
                raise ContainerError(f"bad meta value for {parts[1]!r}: {e}") from e
        elif parts[0] == "tensor" and len(parts) == 3:
            name, rest = parts[1], parts[2]
            try:
                dname, dims = rest.split(" ")
            except ValueError as e:
                raise ContainerError(f"bad tensor line: {line!r}") from e
            if dname not in _DTYPES:
                raise ContainerError(f"unknown dtype {dname!r} for tensor {name!r}")
            shape = () if dims == "-" else tuple(int(d) for d in dims.split(","))
            if any(d < 0 for d in shape):
                raise ContainerError(f"negative extent in tensor {name!r}")
            entries.append((name, dname, shape))
        else:
            raise ContainerError(f"unrecognized manifest line: {line!r}")

    tensors: dict[str, np.ndarray] = {}
    for name, dname, shape in entries:
        dt = np.dtype(_DTYPES[dname])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = count * dt.itemsize
        if pos + nbytes > len(blob):
            raise ContainerError(f"file truncated inside tensor {name!r}")
        tensors[name] = np.frombuffer(blob, dtype=dt, count=count, offset=pos).reshape(shape).copy()
        pos += nbytes
    if pos != len(blob):
        raise ContainerError(f"{len(blob) - pos} trailing bytes after last tensor")
    return tensors, meta
