"""File formats: T3F binary tensors and headerless CSV matrices.

T3F layout (all little-endian)::

    bytes  0..7    magic  b"\\x89T3F\\r\\n\\x1a\\n"
    bytes  8..11   uint32 format version (currently 1)
    bytes 12..15   reserved, zero
    bytes 16..39   three uint64 dims I1, I2, I3
    bytes 40..     I1*I2*I3 float64 values, mode-1 index fastest

A matrix is stored as a T3F tensor with ``I3 == 1``.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .tensor import DimensionError, as_tensor3, vec

MAGIC = b"\x89T3F\r\n\x1a\n"
VERSION = 1
_HEADER = struct.Struct("<8sII3Q")


class FormatError(ValueError):
    """Malformed T3F payload."""


def t3f_bytes(t):
    t = as_tensor3(t)
    header = _HEADER.pack(MAGIC, VERSION, 0, *t.shape)
    return header + vec(t).astype("<f8").tobytes()


def parse_t3f(buf):
    if len(buf) < _HEADER.size:
        raise FormatError("truncated T3F header")
    magic, version, _, i1, i2, i3 = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError("not a T3F file (bad magic)")
    if version != VERSION:
        raise FormatError(f"unsupported T3F version {version}")
    n = i1 * i2 * i3
    expected = _HEADER.size + 8 * n
    if len(buf) != expected:
        raise FormatError(f"T3F payload has {len(buf)} bytes, expected {expected}")
    data = np.frombuffer(buf, dtype="<f8", offset=_HEADER.size, count=n)
    return as_tensor3(data.reshape((i1, i2, i3), order="F").astype(np.float64))


def write_t3f(path, t):
    Path(path).write_bytes(t3f_bytes(t))


def read_t3f(path):
    return parse_t3f(Path(path).read_bytes())


def write_matrix_csv(path, m):
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    # repr-precision keeps the round trip exact
    np.savetxt(path, m, delimiter=",", fmt="%.17g")


def read_matrix_csv(path):
    m = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{path}: non-finite entries")
    return m


def read_matrix(path):
    """Read a matrix from CSV or from a T3F file with a singleton third mode."""
    path = Path(path)
    if path.suffix.lower() == ".t3f":
        t = read_t3f(path)
        if t.shape[2] != 1:
            raise DimensionError(f"{path}: expected I3 == 1 for a matrix, got {t.shape}")
        return t[:, :, 0]
    return read_matrix_csv(path)


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def save_fit(directory, fit, var_model=None, extra=None):
    """Write a fit as T3F tensors plus a ``fit.json`` sidecar.

    ``coef.t3f`` always; ``core.t3f``, ``offset.t3f`` and ``U1.csv``/``U2.csv``
    when present.  Returns the list of files written.
    """
    from .regress import FitResult

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    if not isinstance(fit, FitResult):
        fit = FitResult("gls", as_tensor3(fit))
    written = [d / "coef.t3f"]
    write_t3f(written[0], fit.coef)
    meta = {
        "method": fit.method,
        "shape": list(fit.coef.shape),
        "converged": bool(fit.converged),
        "n_iter": int(fit.n_iter),
        "objective_trace": _jsonable(fit.objective_trace),
        "tuning": _jsonable(fit.tuning),
    }
    if fit.core is not None:
        written.append(d / "core.t3f")
        write_t3f(written[-1], fit.core)
    if fit.offset is not None:
        written.append(d / "offset.t3f")
        write_t3f(written[-1], fit.offset[:, :, None])
    if fit.basis is not None:
        meta["basis"] = {"kind1": fit.basis.kind1, "kind2": fit.basis.kind2, "ranks": list(fit.basis.ranks)}
        for k in (1, 2):
            written.append(d / f"U{k}.csv")
            write_matrix_csv(written[-1], fit.basis.U(k))
    if var_model is not None:
        meta["variance_model"] = var_model.to_dict()
    if extra:
        meta.update(_jsonable(extra))
    written.append(d / "fit.json")
    written[-1].write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return written


def load_fit(directory):
    """Inverse of :func:`save_fit`; returns ``(FitResult, VarianceModel | None, meta)``."""
    from .basis import BasisSet
    from .hetero import VarianceModel
    from .regress import FitResult

    d = Path(directory)
    meta = json.loads((d / "fit.json").read_text())
    fit = FitResult(meta["method"], read_t3f(d / "coef.t3f"))
    if (d / "core.t3f").exists():
        fit.core = read_t3f(d / "core.t3f")
    if (d / "offset.t3f").exists():
        fit.offset = read_t3f(d / "offset.t3f")[:, :, 0]
    if "basis" in meta:
        b = meta["basis"]
        fit.basis = BasisSet(read_matrix_csv(d / "U1.csv"), read_matrix_csv(d / "U2.csv"),
                             kind1=b["kind1"], kind2=b["kind2"])
    fit.converged = meta.get("converged", True)
    fit.n_iter = meta.get("n_iter", 0)
    fit.objective_trace = np.asarray(meta.get("objective_trace", []), dtype=np.float64)
    fit.tuning = meta.get("tuning", {})
    vm = VarianceModel.from_dict(meta["variance_model"]) if "variance_model" in meta else None
    return fit, vm, meta
