"""On-disk formats.

Two binary layouts are used:

* the *sampled* layout for grid functions and symbols: a 16-byte magic,
  ``u32`` version, dimension, rank and flags, the ``u64`` shape, the ``f64``
  period per axis and, for symbols, the frequency ladder; then the values as
  little-endian float64 in row-major order;
* the *container* layout for caches: a 16-byte magic, ``u32`` version,
  ``u32`` header length, a UTF-8 JSON header describing the arrays, then the
  arrays back to back as little-endian data.
"""

import csv
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import CacheMismatchError, WflabError

SAMPLED_MAGIC = b"WFLAB-SAMPLED\x00\x00\x00"
FORMAT_VERSION = 1
_FLAG_LADDER = 1


def _check_magic(magic):
    if len(magic) != 16:
        raise ValueError("magic must be exactly 16 bytes")


def write_sampled(path, values, period, ladder=None):
    """Write a sampled function (or symbol when ``ladder`` is given).

    Parameters
    ----------
    path : path-like
        Destination file.
    values : ndarray
        Samples. For a symbol the last axis indexes the frequency ladder.
    period : sequence of float
        Period of each spatial axis; its length is the spatial dimension.
    ladder : ndarray, optional
        Ladder frequencies, shape ``(L,)`` or ``(L, k)``.
    """
    values = np.ascontiguousarray(values, dtype="<f8")
    period = np.atleast_1d(np.asarray(period, dtype="<f8"))
    flags = 0
    extra = b""
    if ladder is not None:
        lad = np.asarray(ladder, dtype="<f8")
        lad = lad.reshape(lad.shape[0], -1)
        if values.shape[-1] != lad.shape[0]:
            raise ValueError("last axis of values must match the ladder length")
        flags |= _FLAG_LADDER
        extra = struct.pack("<QQ", *lad.shape) + np.ascontiguousarray(lad).tobytes()
    head = SAMPLED_MAGIC + struct.pack("<IIII", FORMAT_VERSION, period.size, values.ndim, flags)
    head += struct.pack("<%dQ" % values.ndim, *values.shape)
    head += period.tobytes() + extra
    Path(path).write_bytes(head + values.tobytes())


def read_sampled(path):
    """Read a file produced by :func:`write_sampled`.

    Returns
    -------
    values : ndarray
    period : ndarray
    ladder : ndarray or None
    """
    raw = Path(path).read_bytes()
    if raw[:16] != SAMPLED_MAGIC:
        raise WflabError("not a sampled-function file: %s" % path)
    version, dim, rank, flags = struct.unpack_from("<IIII", raw, 16)
    if version != FORMAT_VERSION:
        raise WflabError("unsupported format version %d" % version)
    off = 32
    shape = struct.unpack_from("<%dQ" % rank, raw, off)
    off += 8 * rank
    period = np.frombuffer(raw, dtype="<f8", count=dim, offset=off).copy()
    off += 8 * dim
    ladder = None
    if flags & _FLAG_LADDER:
        nl, kl = struct.unpack_from("<QQ", raw, off)
        off += 16
        ladder = np.frombuffer(raw, dtype="<f8", count=nl * kl, offset=off).reshape(nl, kl).copy()
        off += 8 * nl * kl
    count = int(np.prod(shape)) if rank else 1
    values = np.frombuffer(raw, dtype="<f8", count=count, offset=off).reshape(shape).copy()
    return values, period, ladder


def write_sampled_csv(path, coords, values):
    """Columnar CSV: one column per grid coordinate followed by ``value``.

    Parameters
    ----------
    coords : sequence of 1-D arrays
        Axis coordinates; the grid is their Cartesian product (``ij`` order).
    values : ndarray
        Samples with shape ``tuple(len(c) for c in coords)``.
    """
    mesh = np.meshgrid(*coords, indexing="ij")
    names = ["x%d" % i for i in range(len(coords))] + ["value"]
    cols = [m.ravel() for m in mesh] + [np.asarray(values).ravel()]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([repr(float(v)) for v in row])


def write_container(path, magic, header, arrays):
    """Write named arrays with a JSON header.

    Parameters
    ----------
    magic : bytes
        16-byte file signature.
    header : dict
        JSON-serializable metadata (hashes, sizes, tolerances).
    arrays : dict of str -> ndarray
        Stored in insertion order as little-endian data.
    """
    _check_magic(magic)
    layout = []
    blobs = []
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        dt = arr.dtype.newbyteorder("<")
        a = np.ascontiguousarray(arr, dtype=dt)
        layout.append({"name": name, "dtype": dt.str, "shape": list(a.shape)})
        blobs.append(a.tobytes())
    meta = dict(header)
    meta["arrays"] = layout
    hb = json.dumps(meta, sort_keys=True).encode()
    Path(path).write_bytes(magic + struct.pack("<II", FORMAT_VERSION, len(hb)) + hb + b"".join(blobs))


def read_container(path, magic, expected=None):
    """Read a container file, refusing it when header fields disagree.

    Parameters
    ----------
    expected : dict, optional
        Header entries that must match exactly (typically the config hash).

    Returns
    -------
    header : dict
    arrays : dict of str -> ndarray

    Raises
    ------
    CacheMismatchError
        Wrong magic, version or any mismatching expected entry.
    """
    raw = Path(path).read_bytes()
    if raw[:16] != magic:
        raise CacheMismatchError("wrong file signature in %s" % path)
    version, hlen = struct.unpack_from("<II", raw, 16)
    if version != FORMAT_VERSION:
        raise CacheMismatchError("unsupported cache version %d" % version)
    header = json.loads(raw[24:24 + hlen].decode())
    for key, val in (expected or {}).items():
        if header.get(key) != val:
            raise CacheMismatchError("cache field %r is %r, expected %r" % (key, header.get(key), val))
    off = 24 + hlen
    arrays = {}
    for item in header.pop("arrays"):
        dt = np.dtype(item["dtype"])
        count = int(np.prod(item["shape"])) if item["shape"] else 1
        arrays[item["name"]] = np.frombuffer(raw, dtype=dt, count=count, offset=off).reshape(item["shape"]).copy()
        off += dt.itemsize * count
    return header, arrays


def stable_hash(obj) -> str:
    """sha256 of the canonical JSON encoding of ``obj``."""
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()
