"""Sparse undirected graphs and the normalised Laplacian as a matvec operator.

Graphs are stored in compressed sparse row form (a symmetric
``scipy.sparse.csr_matrix`` with sorted, unique column indices and strictly
positive weights).  Everything downstream only needs
:meth:`SpectralOperator.matvec`, so the Laplacian is never formed densely.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterable

import numpy as np
import scipy.sparse as sp

__all__ = [
    "SparseGraph",
    "SpectralOperator",
    "GraphParseError",
    "from_edges",
    "parse_edge_list",
    "read_edge_list",
    "write_edge_list",
    "degrees",
    "make_operator",
    "save_csr_cache",
    "load_csr_cache",
]

NORMALIZED = "normalized_laplacian"
RESCALED = "rescaled_normalized_laplacian"
_MODES = (NORMALIZED, RESCALED)


class GraphParseError(ValueError):
    """Raised for malformed edge-list input."""

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


@dataclass(frozen=True, eq=False)
class SparseGraph:
    """Undirected weighted graph in CSR form.

    Attributes
    ----------
    adjacency : scipy.sparse.csr_matrix
        Symmetric ``n x n`` weight matrix, no diagonal entries.
    node_ids : ndarray of int64
        External id of each dense node index.
    """

    adjacency: sp.csr_matrix
    node_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.node_ids is None:
            object.__setattr__(self, "node_ids", np.arange(self.n, dtype=np.int64))

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def indptr(self) -> np.ndarray:
        return self.adjacency.indptr

    @property
    def indices(self) -> np.ndarray:
        return self.adjacency.indices

    @property
    def weights(self) -> np.ndarray:
        return self.adjacency.data

    @property
    def n_edges(self) -> int:
        """Number of undirected edges."""
        return self.adjacency.nnz // 2

    @property
    def node_relabeling(self) -> dict:
        """Map from external node id to dense index."""
        return {int(v): i for i, v in enumerate(self.node_ids)}

    def edges(self):
        """Return ``(i, j, w)`` arrays of the upper triangle (``i < j``)."""
        upper = sp.triu(self.adjacency, k=1).tocoo()
        order = np.lexsort((upper.col, upper.row))
        return upper.row[order], upper.col[order], upper.data[order]

    def connected_components(self) -> int:
        from scipy.sparse.csgraph import connected_components

        count, _ = connected_components(self.adjacency, directed=False)
        return int(count)

    def to_dense(self) -> np.ndarray:
        return self.adjacency.toarray()

    def __eq__(self, other):
        if not isinstance(other, SparseGraph):
            return NotImplemented
        a, b = self.adjacency, other.adjacency
        return (
            a.shape == b.shape
            and np.array_equal(a.indptr, b.indptr)
            and np.array_equal(a.indices, b.indices)
            and np.array_equal(a.data, b.data)
            and np.array_equal(self.node_ids, other.node_ids)
        )

    __hash__ = None

    def check(self):
        """Assert the structural invariants; returns ``self``."""
        a = self.adjacency
        if a.shape[0] != a.shape[1]:
            raise ValueError("adjacency must be square")
        if np.any(a.data <= 0):
            raise ValueError("stored weights must be positive")
        if np.any(a.diagonal() != 0):
            raise ValueError("self-loops are not allowed")
        if (a != a.T).nnz:
            raise ValueError("adjacency is not symmetric")
        if not a.has_sorted_indices:
            raise ValueError("column indices must be sorted")
        return self


def from_edges(n, rows, cols, weights=None, node_ids=None) -> SparseGraph:
    """Build a graph from undirected edge arrays.

    Each pair may be listed in either or both directions.  Repeated pairs
    collapse to the maximum weight, self-loops are dropped.
    """
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    if weights is None:
        weights = np.ones(rows.shape, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if np.any(weights <= 0):
        raise ValueError("edge weights must be positive")
    keep = rows != cols
    rows, cols, weights = rows[keep], cols[keep], weights[keep]
    lo, hi = np.minimum(rows, cols), np.maximum(rows, cols)
    # max-dedup on the canonical (lo, hi) key
    key = lo * n + hi
    order = np.lexsort((-weights, key))
    key, weights = key[order], weights[order]
    first = np.ones(key.shape, dtype=bool)
    first[1:] = key[1:] != key[:-1]
    key, weights = key[first], weights[first]
    lo, hi = key // n, key % n
    r = np.concatenate([lo, hi])
    c = np.concatenate([hi, lo])
    w = np.concatenate([weights, weights])
    adj = sp.csr_matrix((w, (r, c)), shape=(n, n))
    adj.sort_indices()
    return SparseGraph(adj, None if node_ids is None else np.asarray(node_ids, dtype=np.int64))


def _parse_lines(lines: Iterable) -> SparseGraph:
    ids: dict = {}
    rows, cols, ws = [], [], []
    for lineno, raw in enumerate(lines, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8", errors="strict")
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith("%"):
            continue
        tokens = line.split()
        if len(tokens) < 2 or len(tokens) > 3:
            raise GraphParseError(f"expected 2 or 3 fields, got {len(tokens)}", lineno)
        try:
            u, v = int(tokens[0]), int(tokens[1])
        except ValueError:
            raise GraphParseError(f"non-integer node id in {line!r}", lineno) from None
        if u < 0 or v < 0:
            raise GraphParseError("node ids must be nonnegative", lineno)
        w = 1.0
        if len(tokens) == 3:
            try:
                w = float(tokens[2])
            except ValueError:
                raise GraphParseError(f"bad weight {tokens[2]!r}", lineno) from None
            if not w > 0:
                raise GraphParseError("weights must be positive", lineno)
        if u == v:
            # dropped before relabelling, so a loop alone does not create a node
            continue
        for x in (u, v):
            if x not in ids:
                ids[x] = len(ids)
        rows.append(ids[u])
        cols.append(ids[v])
        ws.append(w)
    if not ids:
        raise GraphParseError("edge list contains no edges")
    return from_edges(len(ids), rows, cols, ws, node_ids=list(ids))


def parse_edge_list(source, format="snap_edgelist") -> SparseGraph:
    """Parse a SNAP-style edge list.

    Parameters
    ----------
    source : bytes, str, or file-like
        ``#`` lines are comments; data lines hold two integer node ids and
        an optional positive weight.
    format : {"snap_edgelist"}

    Node ids are relabelled densely in first-seen order.  Self-loop lines
    are dropped entirely and repeated edges keep their maximum weight.
    """
    if format != "snap_edgelist":
        raise ValueError(f"unsupported format {format!r}")
    if isinstance(source, (bytes, bytearray)):
        source = io.BytesIO(source)
    elif isinstance(source, str):
        source = io.StringIO(source)
    return _parse_lines(source)


def read_edge_list(path) -> SparseGraph:
    with open(path, "rb") as fh:
        return parse_edge_list(fh)


def write_edge_list(g: SparseGraph, dest=None, weighted=None) -> str:
    """Serialise ``g`` as a SNAP edge list (one line per undirected edge).

    Weights are written only if some weight differs from 1, unless
    ``weighted`` forces the choice.  Returns the text; also writes it to
    ``dest`` (path or text file object) when given.
    """
    i, j, w = _first_seen_edge_order(g)
    if weighted is None:
        weighted = bool(np.any(w != 1.0))
    ids = g.node_ids
    out = io.StringIO()
    out.write(f"# Undirected graph: {g.n} nodes, {len(w)} edges\n")
    # isolated nodes cannot be expressed in an edge list
    for a, b, x in zip(ids[i], ids[j], w):
        if weighted:
            out.write(f"{a}\t{b}\t{float(x)!r}\n")
        else:
            out.write(f"{a}\t{b}\n")
    text = out.getvalue()
    if dest is not None:
        if isinstance(dest, (str, Path)):
            Path(dest).write_text(text)
        else:
            dest.write(text)
    return text


def _first_seen_edge_order(g: SparseGraph):
    """Edge order whose first-seen node sequence is ``0, 1, ..., n-1``.

    Node ``k`` is introduced by the edge to its lowest neighbour; all other
    edges follow in sorted order.  Exact for graphs produced by the parser.
    """
    a = g.adjacency
    nonempty = np.flatnonzero(np.diff(a.indptr))
    lowest = a.indices[a.indptr[nonempty]].astype(np.int64)
    first = np.where(lowest < nonempty, lowest, nonempty)
    second = np.where(lowest < nonempty, nonempty, lowest)
    key = np.minimum(first, second) * g.n + np.maximum(first, second)
    _, keep = np.unique(key, return_index=True)
    keep.sort()
    first, second, key = first[keep], second[keep], key[keep]

    i, j, w = g.edges()
    rest = ~np.isin(i * g.n + j, key)
    intro_w = np.asarray(a[first, second]).ravel()
    return (np.concatenate([first, i[rest]]), np.concatenate([second, j[rest]]),
            np.concatenate([intro_w, w[rest]]))


def degrees(g: SparseGraph) -> np.ndarray:
    """Weighted degrees ``d_i = sum_j w_ij``."""
    return np.asarray(g.adjacency.sum(axis=1)).ravel()


class SpectralOperator:
    """Normalised Laplacian ``I - D^{-1/2} W D^{-1/2}``, optionally halved.

    In ``rescaled_normalized_laplacian`` mode the operator is divided by 2 so
    its spectrum lies in ``[0, 1]``.  Isolated nodes get ``D^{-1/2} = 0``, so
    their rows of the normalised adjacency vanish and each contributes the
    eigenvalue 1 (0.5 rescaled).
    """

    def __init__(self, g: SparseGraph, mode=RESCALED):
        if mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}")
        self.graph = g
        self.mode = mode
        d = degrees(g)
        inv = np.zeros_like(d)
        np.divide(1.0, np.sqrt(d), out=inv, where=d > 0)
        inv.setflags(write=False)
        self.inv_sqrt_degree = inv
        s = sp.diags(inv)
        wn = (s @ g.adjacency @ s).tocsr()
        wn.sort_indices()
        self._wnorm = wn
        self.scale = 0.5 if mode == RESCALED else 1.0

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def shape(self):
        return (self.n, self.n)

    @property
    def rescaled(self) -> bool:
        return self.mode == RESCALED

    @property
    def nnz(self) -> int:
        return self._wnorm.nnz

    def matvec(self, x):
        """Apply the operator to a vector, or column-wise to an ``(n, k)`` block."""
        x = np.asarray(x, dtype=float)
        if x.shape[0] != self.n or x.ndim > 2:
            raise ValueError(f"dimension mismatch: operator is {self.n}x{self.n}, got {x.shape}")
        y = x - self._wnorm @ x
        if self.scale != 1.0:
            y *= self.scale
        return y

    __matmul__ = matvec

    def to_dense(self) -> np.ndarray:
        return self.scale * (np.eye(self.n) - self._wnorm.toarray())

    def aslinearoperator(self):
        from scipy.sparse.linalg import LinearOperator

        return LinearOperator(self.shape, matvec=self.matvec, matmat=self.matvec,
                              rmatvec=self.matvec, dtype=float)

    def __repr__(self):
        return f"SpectralOperator(n={self.n}, nnz={self.nnz}, mode={self.mode!r})"


def make_operator(g: SparseGraph, mode=RESCALED) -> SpectralOperator:
    return SpectralOperator(g, mode)


# Binary CSR cache, all little-endian:
#   magic   8 bytes  b"EGSCSR\x00\x00"
#   version uint32   (currently 1)
#   flags   uint32   (reserved, 0)
#   n       uint64
#   nnz     uint64
#   indptr  int64[n + 1]
#   indices int64[nnz]
#   weights float64[nnz]
#   node_ids int64[n]
_MAGIC = b"EGSCSR\x00\x00"
_VERSION = 1
_HEADER = struct.Struct("<8sIIQQ")


def save_csr_cache(g: SparseGraph, dest) -> None:
    """Write ``g`` to the binary CSR cache format."""
    a = g.adjacency
    header = _HEADER.pack(_MAGIC, _VERSION, 0, a.shape[0], a.nnz)
    payload = b"".join([
        header,
        np.ascontiguousarray(a.indptr, dtype="<i8").tobytes(),
        np.ascontiguousarray(a.indices, dtype="<i8").tobytes(),
        np.ascontiguousarray(a.data, dtype="<f8").tobytes(),
        np.ascontiguousarray(g.node_ids, dtype="<i8").tobytes(),
    ])
    if isinstance(dest, (str, Path)):
        Path(dest).write_bytes(payload)
    else:
        dest.write(payload)


def load_csr_cache(src) -> SparseGraph:
    if isinstance(src, (str, Path)):
        buf = Path(src).read_bytes()
    elif isinstance(src, (bytes, bytearray)):
        buf = bytes(src)
    else:
        buf = src.read()
    if len(buf) < _HEADER.size:
        raise ValueError("truncated CSR cache")
    magic, version, _flags, n, nnz = _HEADER.unpack_from(buf, 0)
    if magic != _MAGIC:
        raise ValueError("not an EGS CSR cache file")
    if version != _VERSION:
        raise ValueError(f"unsupported CSR cache version {version}")
    expected = _HEADER.size + 8 * (n + 1) + 8 * nnz * 2 + 8 * n
    if len(buf) != expected:
        raise ValueError("CSR cache size does not match its header")
    off = _HEADER.size
    indptr = np.frombuffer(buf, "<i8", n + 1, off); off += 8 * (n + 1)
    indices = np.frombuffer(buf, "<i8", nnz, off); off += 8 * nnz
    data = np.frombuffer(buf, "<f8", nnz, off); off += 8 * nnz
    node_ids = np.frombuffer(buf, "<i8", n, off)
    adj = sp.csr_matrix((data.astype(float), indices.astype(np.int32 if n < 2**31 else np.int64),
                         indptr.astype(np.int32 if nnz < 2**31 else np.int64)), shape=(n, n))
    return SparseGraph(adj, node_ids.astype(np.int64)).check()
