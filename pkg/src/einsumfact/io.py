"""Tensor files and run manifests.

``.coo`` text::

    dims 3 4 5
    0 1 2 0.5
    2 3 4 1.25

Zero-based indices, one entry per line, omitted entries are zero and
repeated indices are summed.  Blank lines and ``#`` comments are skipped.

``.dtb`` binary: magic ``b"DTB1"``, little-endian ``u32`` mode count,
``u64`` dims, then the row-major ``f64`` values.
"""
from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"DTB1"


class TensorFormatError(ValueError):
    pass


def _atomic_write(path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    _atomic_write(path, text.encode("utf-8"))


def _check_values(values, where):
    if not np.all(np.isfinite(values)):
        raise TensorFormatError(f"{where}: non-finite value")
    if np.any(values < 0):
        raise TensorFormatError(f"{where}: negative value")


def _read_coo(path) -> np.ndarray:
    lines = Path(path).read_text().splitlines()
    body = [(n, ln.split("#", 1)[0].split()) for n, ln in enumerate(lines, 1)]
    body = [(n, toks) for n, toks in body if toks]
    if not body or body[0][1][0] != "dims":
        raise TensorFormatError(f"{path}: malformed header, expected 'dims d1 ... dM'")
    try:
        dims = tuple(int(d) for d in body[0][1][1:])
    except ValueError:
        raise TensorFormatError(f"{path}: malformed header {' '.join(body[0][1])!r}") from None
    if not dims or min(dims) < 1:
        raise TensorFormatError(f"{path}: malformed header, dims must be positive")
    out = np.zeros(dims)
    m = len(dims)
    for n, toks in body[1:]:
        if len(toks) != m + 1:
            raise TensorFormatError(f"{path}:{n}: expected {m} indices and a value")
        try:
            idx = tuple(int(t) for t in toks[:m])
            value = float(toks[m])
        except ValueError:
            raise TensorFormatError(f"{path}:{n}: cannot parse {' '.join(toks)!r}") from None
        if any(not 0 <= i < d for i, d in zip(idx, dims)):
            raise TensorFormatError(f"{path}:{n}: index {idx} out of range for dims {dims}")
        _check_values(np.array([value]), f"{path}:{n}")
        out[idx] += value
    return out


def _write_coo(t: np.ndarray, path) -> None:
    rows = ["dims " + " ".join(str(d) for d in t.shape)]
    for idx in zip(*np.nonzero(t)):
        rows.append(" ".join(str(int(i)) for i in idx) + " " + repr(float(t[idx])))
    atomic_write_text(path, "\n".join(rows) + "\n")


def _read_dtb(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise TensorFormatError(f"{path}: bad magic, not a DTB1 file")
    if len(raw) < 8:
        raise TensorFormatError(f"{path}: truncated header")
    (m,) = struct.unpack_from("<I", raw, 4)
    head = 8 + 8 * m
    if len(raw) < head:
        raise TensorFormatError(f"{path}: truncated header")
    dims = struct.unpack_from(f"<{m}Q", raw, 8)
    n = int(np.prod(dims, dtype=np.int64))
    if len(raw) != head + 8 * n:
        raise TensorFormatError(
            f"{path}: truncated or oversized body ({len(raw) - head} bytes, expected {8 * n})")
    values = np.frombuffer(raw, dtype="<f8", count=n, offset=head).astype(np.float64)
    return values.reshape(dims)


def _write_dtb(t: np.ndarray, path) -> None:
    header = MAGIC + struct.pack("<I", t.ndim) + struct.pack(f"<{t.ndim}Q", *t.shape)
    _atomic_write(path, header + np.ascontiguousarray(t, dtype="<f8").tobytes())


def read_tensor(path) -> np.ndarray:
    """Load a ``.coo`` or ``.dtb`` file as a float64 array."""
    suffix = Path(path).suffix
    if suffix == ".coo":
        return _read_coo(path)
    if suffix == ".dtb":
        t = _read_dtb(path)
        _check_values(t, str(path))
        return t
    raise TensorFormatError(f"{path}: unknown tensor format {suffix!r} (use .coo or .dtb)")


def write_tensor(t, path) -> None:
    t = np.asarray(t, dtype=np.float64)
    suffix = Path(path).suffix
    if suffix == ".coo":
        _write_coo(t, path)
    elif suffix == ".dtb":
        _write_dtb(t, path)
    else:
        raise TensorFormatError(f"{path}: unknown tensor format {suffix!r} (use .coo or .dtb)")


# manifests ----------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, dict):
        return ",".join(f"{k}={v[k]}" for k in sorted(v))
    return str(v)


def write_manifest(entries: dict, path) -> None:
    """Write ``key=value`` lines in the order given."""
    atomic_write_text(path, "".join(f"{k}={_fmt(v)}\n" for k, v in entries.items()))


def read_manifest(path) -> dict[str, str]:
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{n}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def parse_ranks(text: str) -> dict[str, int]:
    """``"r=3,k=2"`` -> ``{"r": 3, "k": 2}``."""
    out = {}
    for item in filter(None, (p.strip() for p in text.split(","))):
        key, sep, val = item.partition("=")
        key = key.strip()
        if not sep or len(key) != 1 or not key.isalpha():
            raise ValueError(f"bad rank binding {item!r}, expected letter=int")
        try:
            out[key] = int(val)
        except ValueError:
            raise ValueError(f"bad rank value in {item!r}") from None
        if out[key] < 1:
            raise ValueError(f"rank for {key!r} must be >= 1")
    return out
