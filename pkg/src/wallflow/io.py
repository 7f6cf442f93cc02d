"""Field container, CSV tables and JSON reports.

Binary container layout (all integers little-endian, no padding)::

    magic       8 bytes   b"WALLFLW\\x00"
    version     u32       1
    kind        u32       1 spectral, 2 physical, 3 stream, 4 generic
    label       u32 length, then UTF-8 bytes
    grids       u32 count, then per grid:
                  name  (u32 length + UTF-8), rule (u32 length + UTF-8),
                  u64 node count, nodes as f64
    arrays      u32 count, then per array:
                  name (u32 length + UTF-8), u8 dtype (0 = f64, 1 = complex128
                  stored as interleaved re/im f64), u32 ndim, ndim x u64 dims,
                  row-major payload
    metadata    u32 length, then UTF-8 JSON object

Physical arrays are indexed [x, y]; spectral arrays [k, y].
"""

from __future__ import annotations

import csv
import datetime as _dt
import io as _io
import json
import struct
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .fields import PhysicalVectorField, SpectralField, StreamFunction, WallNormalGrid, WaveNumberGrid

__all__ = ["MAGIC", "VERSION", "ContainerError", "write_container", "read_container",
           "write_csv", "read_csv", "write_json", "to_jsonable", "field_to_csv"]

MAGIC = b"WALLFLW\x00"
VERSION = 1
KINDS = {"spectral": 1, "physical": 2, "stream": 3, "generic": 4}
_KIND_NAMES = {v: k for k, v in KINDS.items()}


class ContainerError(ValueError):
    pass


def _wstr(buf, s: str):
    b = s.encode("utf-8")
    buf.write(struct.pack("<I", len(b)))
    buf.write(b)


def _rstr(buf) -> str:
    (n,) = struct.unpack("<I", _read(buf, 4))
    return _read(buf, n).decode("utf-8")


def _read(buf, n):
    b = buf.read(n)
    if len(b) != n:
        raise ContainerError("truncated container")
    return b


def _parts(obj):
    """(kind, label, grids, arrays, meta) for a supported object."""
    if isinstance(obj, SpectralField):
        return ("spectral", obj.label, [("k", obj.kgrid.rule, obj.kgrid.nodes), ("y", obj.ygrid.rule, obj.ygrid.nodes)],
                [("values", obj.values)], {})
    if isinstance(obj, PhysicalVectorField):
        arrays = [("u", obj.u), ("v", obj.v)]
        if obj.psi is not None:
            arrays.append(("psi", obj.psi))
        return ("physical", "velocity", [("x", "custom", obj.x), ("y", obj.ygrid.rule, obj.ygrid.nodes)], arrays, {})
    if isinstance(obj, StreamFunction):
        return ("stream", "psi", [("x", "custom", obj.x), ("y", obj.ygrid.rule, obj.ygrid.nodes)],
                [("psi", obj.psi)], {})
    raise TypeError(f"cannot serialise {type(obj).__name__}; use write_container(..., arrays=...)")


def write_container(path, obj=None, *, label: str = "", grids=(), arrays=(), meta: Mapping | None = None) -> Path:
    """Write a field, or a generic bundle of named grids and arrays."""
    if obj is not None:
        kind, label0, grids, arrays, meta0 = _parts(obj)
        label = label or label0
        meta = {**meta0, **(meta or {})}
    else:
        kind = "generic"
    buf = _io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, KINDS[kind]))
    _wstr(buf, label)
    buf.write(struct.pack("<I", len(grids)))
    for name, rule, nodes in grids:
        nodes = np.ascontiguousarray(nodes, dtype="<f8")
        _wstr(buf, name)
        _wstr(buf, rule)
        buf.write(struct.pack("<Q", nodes.size))
        buf.write(nodes.tobytes())
    buf.write(struct.pack("<I", len(arrays)))
    for name, arr in arrays:
        arr = np.asarray(arr)
        cplx = np.iscomplexobj(arr)
        data = np.ascontiguousarray(arr, dtype="<c16" if cplx else "<f8")
        _wstr(buf, name)
        buf.write(struct.pack("<BI", int(cplx), data.ndim))
        buf.write(struct.pack(f"<{data.ndim}Q", *data.shape))
        buf.write(data.tobytes(order="C"))
    _wstr(buf, json.dumps(to_jsonable(meta or {}), sort_keys=True))
    path = Path(path)
    path.write_bytes(buf.getvalue())
    return path


def read_container(path):
    """Inverse of write_container; fields come back as their types, bundles as dicts."""
    buf = _io.BytesIO(Path(path).read_bytes())
    if _read(buf, 8) != MAGIC:
        raise ContainerError("bad magic")
    version, kind = struct.unpack("<II", _read(buf, 8))
    if version != VERSION:
        raise ContainerError(f"unsupported version {version}")
    if kind not in _KIND_NAMES:
        raise ContainerError(f"unknown kind {kind}")
    label = _rstr(buf)
    (ng,) = struct.unpack("<I", _read(buf, 4))
    grids = {}
    rules = {}
    for _ in range(ng):
        name, rule = _rstr(buf), _rstr(buf)
        (n,) = struct.unpack("<Q", _read(buf, 8))
        grids[name] = np.frombuffer(_read(buf, 8 * n), dtype="<f8").astype(float)
        rules[name] = rule
    (na,) = struct.unpack("<I", _read(buf, 4))
    arrays = {}
    for _ in range(na):
        name = _rstr(buf)
        cplx, ndim = struct.unpack("<BI", _read(buf, 5))
        shape = struct.unpack(f"<{ndim}Q", _read(buf, 8 * ndim))
        dt = np.dtype("<c16" if cplx else "<f8")
        count = int(np.prod(shape)) if ndim else 1
        arrays[name] = np.frombuffer(_read(buf, dt.itemsize * count), dtype=dt).reshape(shape).copy()
    meta = json.loads(_rstr(buf))
    kname = _KIND_NAMES[kind]
    if kname == "spectral":
        return SpectralField(WaveNumberGrid(grids["k"], rules["k"]), WallNormalGrid(grids["y"], rules["y"]),
                             arrays["values"], label)
    if kname == "physical":
        return PhysicalVectorField(grids["x"], WallNormalGrid(grids["y"], rules["y"]),
                                   arrays["u"], arrays["v"], psi=arrays.get("psi"))
    if kname == "stream":
        return StreamFunction(grids["x"], WallNormalGrid(grids["y"], rules["y"]), arrays["psi"])
    return {"label": label, "grids": grids, "rules": rules, "arrays": arrays, "meta": meta}


# ---------------------------------------------------------------------------


def write_csv(path, columns: Mapping[str, Any]) -> Path:
    """Columns of equal length; complex columns split into _re/_im."""
    names, cols = [], []
    for name, col in columns.items():
        col = np.asarray(col).ravel()
        if np.iscomplexobj(col):
            names += [f"{name}_re", f"{name}_im"]
            cols += [col.real, col.imag]
        else:
            names.append(name)
            cols.append(col)
    n = {c.size for c in cols}
    if len(n) > 1:
        raise ValueError("CSV columns must have equal length")
    path = Path(path)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(names)
        for row in zip(*cols):
            wr.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def read_csv(path) -> dict:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], rows[1:]
    return {h: np.array([float(r[i]) for r in body]) for i, h in enumerate(head)}


def field_to_csv(path, fld, max_points: int = 200_000) -> Path:
    """Long-format CSV of a small field (one row per node)."""
    if isinstance(fld, SpectralField):
        K, Y = np.meshgrid(fld.kgrid.nodes, fld.ygrid.nodes, indexing="ij")
        cols = {"k": K, "y": Y, fld.label: fld.values}
    elif isinstance(fld, PhysicalVectorField):
        X, Y = fld.mesh()
        cols = {"x": X, "y": Y, "u": fld.u, "v": fld.v}
    else:
        raise TypeError(type(fld).__name__)
    if next(iter(cols.values())).size > max_points:
        raise ValueError("grid too large for CSV; use the binary container")
    return write_csv(path, cols)


def to_jsonable(obj):
    if isinstance(obj, Mapping):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, record: Mapping, timestamp: bool = True) -> Path:
    rec = dict(to_jsonable(record))
    if timestamp:
        rec["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    path = Path(path)
    path.write_text(json.dumps(rec, indent=2, sort_keys=True) + "\n")
    return path
