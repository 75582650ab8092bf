"""File formats: matrix CSV, the GLR1 binary container, edge lists and labels.

GLR1 layout (all integers little-endian u64, floats little-endian f64)::

    b"GLR1" | version | block count
    per block: name length | name (utf-8) | kind (u64) | payload

    kind 0 dense : rows | cols | rows*cols values, column-major
    kind 1 csr   : rows | cols | nnz | indptr[rows+1] | indices[nnz] | data[nnz]
    kind 2 vector: length | values
    kind 3 json  : byte length | utf-8 text
    kind 4 ints  : length | i64 values

Matrix CSV: a ``# rows,cols`` header line, then one comma-separated row per
line with 17 significant digits.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import FormatError
from .graph import GraphModel, graph_from_weights
from .linalg import as_csr

MAGIC = b"GLR1"
VERSION = 1
DENSE, CSR, VECTOR, JSON, INTS = range(5)


# -- GLR1 container -----------------------------------------------------------

def _u64(*vals) -> bytes:
    return struct.pack(f"<{len(vals)}Q", *vals)


def _encode_block(name: str, obj) -> bytes:
    nb = name.encode("utf-8")
    head = _u64(len(nb)) + nb
    if sp.issparse(obj):
        A = as_csr(obj)
        return (head + _u64(CSR, A.shape[0], A.shape[1], A.nnz)
                + A.indptr.astype("<u8").tobytes() + A.indices.astype("<u8").tobytes()
                + A.data.astype("<f8").tobytes())
    if isinstance(obj, dict):
        text = json.dumps(obj, sort_keys=True).encode("utf-8")
        return head + _u64(JSON, len(text)) + text
    arr = np.asarray(obj)
    if arr.ndim == 1 and np.issubdtype(arr.dtype, np.integer):
        return head + _u64(INTS, arr.size) + arr.astype("<i8").tobytes()
    if arr.ndim == 1:
        return head + _u64(VECTOR, arr.size) + arr.astype("<f8").tobytes()
    if arr.ndim == 2:
        return (head + _u64(DENSE, arr.shape[0], arr.shape[1])
                + np.asfortranarray(arr, dtype="<f8").tobytes(order="F"))
    raise TypeError(f"block {name!r}: cannot store object of type {type(obj).__name__}")


def write_container(path, blocks: dict) -> None:
    """Write named blocks (dense/sparse matrices, vectors, dicts) to ``path``."""
    parts = [MAGIC, _u64(VERSION, len(blocks))]
    parts += [_encode_block(name, obj) for name, obj in blocks.items()]
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, nbytes: int) -> bytes:
        if nbytes < 0 or self.pos + nbytes > len(self.buf):
            raise FormatError(f"GLR1: truncated file at byte offset {self.pos} "
                              f"(need {nbytes} bytes, {len(self.buf) - self.pos} left)")
        out = self.buf[self.pos:self.pos + nbytes]
        self.pos += nbytes
        return out

    def u64(self, count: int = 1):
        vals = struct.unpack(f"<{count}Q", self.take(8 * count))
        return vals[0] if count == 1 else vals

    def array(self, dtype: str, count: int) -> np.ndarray:
        return np.frombuffer(self.take(np.dtype(dtype).itemsize * count), dtype=dtype).copy()


def read_container(path) -> dict:
    """Inverse of :func:`write_container`.

    Raises
    ------
    FormatError
        On bad magic, unknown block kinds or truncation (with byte offset).
    """
    r = _Reader(Path(path).read_bytes())
    if r.take(4) != MAGIC:
        raise FormatError("GLR1: bad magic bytes at offset 0")
    version, count = r.u64(2)
    if version != VERSION:
        raise FormatError(f"GLR1: unsupported version {version} at offset 4")
    blocks = {}
    for _ in range(count):
        name = r.take(r.u64()).decode("utf-8")
        at = r.pos
        kind = r.u64()
        if kind == DENSE:
            rows, cols = r.u64(2)
            blocks[name] = r.array("<f8", rows * cols).reshape((rows, cols), order="F")
        elif kind == CSR:
            rows, cols, nnz = r.u64(3)
            indptr = r.array("<u8", rows + 1).astype(np.int64)
            indices = r.array("<u8", nnz).astype(np.int64)
            data = r.array("<f8", nnz)
            if indptr[-1] != nnz:
                raise FormatError(f"GLR1: block {name!r} at offset {at}: indptr does not end at nnz")
            blocks[name] = sp.csr_matrix((data, indices, indptr), shape=(rows, cols))
        elif kind == VECTOR:
            blocks[name] = r.array("<f8", r.u64())
        elif kind == INTS:
            blocks[name] = r.array("<i8", r.u64())
        elif kind == JSON:
            blocks[name] = json.loads(r.take(r.u64()).decode("utf-8"))
        else:
            raise FormatError(f"GLR1: unknown block kind {kind} at offset {at}")
    if r.pos != len(r.buf):
        raise FormatError(f"GLR1: {len(r.buf) - r.pos} trailing bytes at offset {r.pos}")
    return blocks


# -- dense matrices -------------------------------------------------------------

def save_matrix_csv(path, X: np.ndarray) -> None:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    with open(path, "w") as fh:
        fh.write(f"# {X.shape[0]},{X.shape[1]}\n")
        np.savetxt(fh, X, fmt="%.17g", delimiter=",")


def load_matrix_csv(path) -> np.ndarray:
    """Parse a matrix CSV; raises :class:`FormatError` naming the bad line."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise FormatError(f"{path}: line 1: missing '# rows,cols' header")
    try:
        rows, cols = (int(t) for t in lines[0][1:].split(","))
    except ValueError:
        raise FormatError(f"{path}: line 1: malformed header {lines[0]!r}") from None
    body = [(i + 2, ln) for i, ln in enumerate(lines[1:]) if ln.strip()]
    if len(body) != rows:
        raise FormatError(f"{path}: header declares {rows} rows, found {len(body)}")
    X = np.empty((rows, cols))
    for r, (lineno, ln) in enumerate(body):
        fields = ln.split(",")
        if len(fields) != cols:
            raise FormatError(f"{path}: line {lineno}: expected {cols} values, found {len(fields)}")
        try:
            X[r] = [float(f) for f in fields]
        except ValueError:
            raise FormatError(f"{path}: line {lineno}: non-numeric value") from None
    return X


def _fmt(path, fmt: str | None) -> str:
    if fmt:
        return fmt
    return "csv" if str(path).endswith(".csv") else "glr1"


def save_matrix(path, X: np.ndarray, fmt: str | None = None) -> None:
    """Save a dense matrix as ``csv`` or ``glr1`` (default by file suffix)."""
    if _fmt(path, fmt) == "csv":
        save_matrix_csv(path, X)
    else:
        write_container(path, {"X": np.asarray(X, dtype=np.float64)})


def load_matrix(path, fmt: str | None = None) -> np.ndarray:
    if _fmt(path, fmt) == "csv":
        return load_matrix_csv(path)
    blocks = read_container(path)
    mats = [v for v in blocks.values() if isinstance(v, np.ndarray) and v.ndim == 2]
    if "X" in blocks:
        return blocks["X"]
    if len(mats) != 1:
        raise FormatError(f"{path}: expected one dense matrix block, found {len(mats)}")
    return mats[0]


# -- graphs, factors, labels ------------------------------------------------------

def save_graph(path, G: GraphModel) -> None:
    write_container(path, {"W": G.W, "meta": {"kind": G.laplacian_kind, "K": G.K,
                                              "sigma2": G.sigma2}})


def load_graph(path) -> GraphModel:
    blocks = read_container(path)
    if "W" not in blocks:
        raise FormatError(f"{path}: graph container has no 'W' block")
    meta = blocks.get("meta", {})
    return graph_from_weights(blocks["W"], kind=meta.get("kind", "combinatorial"),
                              K=int(meta.get("K", 10)), sigma2=float(meta.get("sigma2", 1.0)))


def save_edge_list(path, W) -> None:
    """Upper-triangular edges as ``i,j,w`` lines."""
    T = sp.triu(as_csr(W), k=1).tocoo()
    order = np.lexsort((T.col, T.row))
    with open(path, "w") as fh:
        fh.write("i,j,w\n")
        for i, j, w in zip(T.row[order], T.col[order], T.data[order]):
            fh.write(f"{i},{j},{w:.17g}\n")


def load_edge_list(path, n: int | None = None) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    with open(path) as fh:
        for lineno, ln in enumerate(fh, start=1):
            ln = ln.strip()
            if not ln or ln.startswith("i,") or ln.startswith("#"):
                continue
            try:
                i, j, w = ln.split(",")
                rows.append(int(i))
                cols.append(int(j))
                vals.append(float(w))
            except ValueError:
                raise FormatError(f"{path}: line {lineno}: expected 'i,j,w'") from None
    size = n if n is not None else (max(max(rows), max(cols)) + 1 if rows else 0)
    A = sp.csr_matrix((vals, (rows, cols)), shape=(size, size))
    return as_csr(A.maximum(A.T))


def save_factors(path, factors) -> None:
    write_container(path, {"U": factors.U, "sigma": factors.sigma, "V": factors.V,
                           "meta": {"k": factors.k, "scale_applied": factors.scale_applied}})


def load_factors(path):
    from .decoders import LowRankFactors

    b = read_container(path)
    return LowRankFactors(U=b["U"], sigma=b["sigma"], V=b["V"],
                          scale_applied=bool(b.get("meta", {}).get("scale_applied", True)))


def save_labels(path, assignments) -> None:
    a = np.asarray(assignments, dtype=np.int64)
    with open(path, "w") as fh:
        fh.write("index,label\n")
        for i, v in enumerate(a):
            fh.write(f"{i},{v}\n")


def load_labels(path) -> np.ndarray:
    pairs = []
    with open(path) as fh:
        for lineno, ln in enumerate(fh, start=1):
            ln = ln.strip()
            if not ln or ln.startswith("index"):
                continue
            try:
                i, v = ln.split(",")
                pairs.append((int(i), int(v)))
            except ValueError:
                raise FormatError(f"{path}: line {lineno}: expected 'index,label'") from None
    out = np.empty(len(pairs), dtype=np.int64)
    for i, v in pairs:
        if not (0 <= i < len(pairs)):
            raise FormatError(f"{path}: index {i} out of range")
        out[i] = v
    return out
