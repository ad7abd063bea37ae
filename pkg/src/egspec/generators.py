"""Random graph models and the semicircle law's analytic moments."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import comb

import numpy as np

from .graph import SparseGraph, from_edges
from .moments import CHEBYSHEV, POWER, MomentVector, _check_basis, convert_exact

__all__ = [
    "ModelSpec",
    "SemicircleSpec",
    "generate",
    "erdos_renyi",
    "watts_strogatz",
    "barabasi_albert",
    "planted_clusters",
    "semicircle_moments",
    "semicircle_density",
]

FAMILIES = ("ER", "WS", "BA", "planted")


@dataclass(frozen=True)
class ModelSpec:
    """A random graph family with its parameters.

    ``params`` by family:

    * ``ER``: ``p``, optionally ``coupled`` (see :func:`erdos_renyi`)
    * ``WS``: ``k`` (even ring degree, default 4), ``p`` (rewiring probability)
    * ``BA``: ``r`` (edges per new node)
    * ``planted``: ``clusters`` (list of ``(size, ModelSpec)``), ``inter_edges``
    """

    family: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def erdos_renyi(n, p, seed=None, coupled=False) -> SparseGraph:
    """G(n, p) on ``n`` nodes.

    By default pairs are visited by geometric skipping, ``O(n + edges)``.
    With ``coupled=True`` every pair gets its own uniform draw and is kept
    when the draw is below ``p``; graphs from the same seed are then nested
    in ``p``, at ``O(n^2)`` cost.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if n < 1:
        raise ValueError("n must be positive")
    rng = _rng(seed)
    total = n * (n - 1) // 2
    if coupled:
        block = 1 << 20
        pos = np.concatenate(
            [s + np.flatnonzero(rng.random(min(block, total - s)) < p)
             for s in range(0, total, block)] or [np.empty(0, dtype=np.int64)])
    elif p == 0.0 or total == 0:
        pos = np.empty(0, dtype=np.int64)
    elif p == 1.0:
        pos = np.arange(total, dtype=np.int64)
    else:
        chunks = []
        last = -1
        expected = int(total * p + 10 * np.sqrt(total * p) + 16)
        while True:
            gaps = rng.geometric(p, size=expected)
            idx = last + np.cumsum(gaps, dtype=np.int64)
            chunks.append(idx[idx < total])
            if idx[-1] >= total:
                break
            last = int(idx[-1])
        pos = np.concatenate(chunks)
    # linear pair index -> (i, j), i < j, enumerated row by row
    i = (n - 2 - np.floor(np.sqrt(-8.0 * pos + 4.0 * n * (n - 1) - 7) / 2.0 - 0.5)).astype(np.int64)
    start = i * (2 * n - i - 1) // 2
    # guard against floating-point rounding in the row recovery
    low = pos < start
    while np.any(low):
        i[low] -= 1
        start = i * (2 * n - i - 1) // 2
        low = pos < start
    high = pos >= start + (n - 1 - i)
    while np.any(high):
        i[high] += 1
        start = i * (2 * n - i - 1) // 2
        high = pos >= start + (n - 1 - i)
    j = pos - start + i + 1
    return from_edges(n, i, j)


def watts_strogatz(n, k=4, p=0.1, seed=None) -> SparseGraph:
    """Ring lattice of even degree ``k`` with each edge rewired with probability ``p``.

    Rewiring keeps the lower endpoint and picks a new partner uniformly among
    nodes that are neither the node itself nor already adjacent.  The
    rewiring decisions are drawn up front, so with a fixed seed the set of
    rewired edges grows monotonically with ``p``.
    """
    if k % 2 or k < 2 or k >= n:
        raise ValueError("k must be even with 2 <= k < n")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    rng = _rng(seed)
    decide, partner = (np.random.default_rng(s) for s in rng.integers(2**63, size=2))
    adj = [set() for _ in range(n)]
    ring = []
    for offset in range(1, k // 2 + 1):
        for u in range(n):
            v = (u + offset) % n
            adj[u].add(v)
            adj[v].add(u)
            ring.append((u, v))
    rewire = decide.random(len(ring)) < p
    for (u, v), flip in zip(ring, rewire):
        if not flip:
            continue
        if len(adj[u]) >= n - 1:
            continue
        while True:
            w = int(partner.integers(n))
            if w != u and w not in adj[u]:
                break
        adj[u].discard(v)
        adj[v].discard(u)
        adj[u].add(w)
        adj[w].add(u)
    rows = [u for u in range(n) for v in adj[u] if u < v]
    cols = [v for u in range(n) for v in adj[u] if u < v]
    return from_edges(n, rows, cols)


def barabasi_albert(n, r, seed=None) -> SparseGraph:
    """Preferential attachment from an ``r``-clique; each new node adds ``r`` edges.

    Targets are drawn without replacement with probability proportional to
    current degree, so the edge count is exactly ``C(r, 2) + r (n - r)``.
    """
    if not 1 <= r < n:
        raise ValueError("need 1 <= r < n")
    rng = _rng(seed)
    n_edges = comb(r, 2) + r * (n - r)
    rows = np.empty(n_edges, dtype=np.int64)
    cols = np.empty(n_edges, dtype=np.int64)
    # degree-weighted urn: each endpoint occurrence is one ball
    urn = np.empty(2 * n_edges, dtype=np.int64)
    e = 0
    for u in range(r):
        for v in range(u + 1, r):
            rows[e], cols[e] = u, v
            urn[2 * e], urn[2 * e + 1] = u, v
            e += 1
    for new in range(r, n):
        targets = set()
        while len(targets) < r:
            if e == 0:
                # a lone seed node has no degree yet
                draws = rng.integers(new, size=r - len(targets))
            else:
                draws = urn[rng.integers(2 * e, size=r - len(targets))]
            for t in draws:
                targets.add(int(t))
        for t in sorted(targets):
            rows[e], cols[e] = new, t
            e += 1
        urn[2 * (e - r): 2 * e: 2] = new
        urn[2 * (e - r) + 1: 2 * e: 2] = sorted(targets)
    return from_edges(n, rows, cols)


def planted_clusters(clusters, inter_edges=0, seed=None) -> SparseGraph:
    """Disjoint random clusters joined by exactly ``inter_edges`` random edges.

    Parameters
    ----------
    clusters : list of (size, ModelSpec)
        Each cluster is generated by its own spec (its seed is ignored; a
        child stream of ``seed`` is used instead).
    inter_edges : int
        Edges between distinct clusters, sampled uniformly without
        replacement.
    """
    rng = _rng(seed)
    rows, cols = [], []
    offsets = []
    offset = 0
    for size, spec in clusters:
        child = np.random.default_rng(rng.integers(2**63))
        g = _generate_family(spec.family, spec.params, size, child)
        i, j, _ = g.edges()
        rows.append(i + offset)
        cols.append(j + offset)
        offsets.append(offset)
        offset += size
    n = offset
    label = np.repeat(np.arange(len(clusters)), [s for s, _ in clusters])
    cross = n * n - int(np.sum(np.asarray([s for s, _ in clusters]) ** 2))
    if inter_edges > cross // 2:
        raise ValueError("more inter-cluster edges requested than node pairs exist")
    chosen = set()
    while len(chosen) < inter_edges:
        u, v = (int(x) for x in rng.integers(n, size=2))
        if label[u] == label[v]:
            continue
        chosen.add((min(u, v), max(u, v)))
    if chosen:
        extra = np.asarray(sorted(chosen), dtype=np.int64)
        rows.append(extra[:, 0])
        cols.append(extra[:, 1])
    if not rows:
        return from_edges(n, [], [])
    return from_edges(n, np.concatenate(rows), np.concatenate(cols))


def _generate_family(family, params, n, rng):
    if family == "ER":
        return erdos_renyi(n, params["p"], rng, params.get("coupled", False))
    if family == "WS":
        return watts_strogatz(n, params.get("k", 4), params["p"], rng)
    if family == "BA":
        return barabasi_albert(n, int(params["r"]), rng)
    if family == "planted":
        return planted_clusters(params["clusters"], params.get("inter_edges", 0), rng)
    raise ValueError(f"unknown family {family!r}")


def generate(spec: ModelSpec, n=None) -> SparseGraph:
    """Generate a graph from ``spec``; deterministic given ``spec.seed``."""
    if spec.family == "planted":
        return planted_clusters(spec.params["clusters"], spec.params.get("inter_edges", 0),
                                spec.seed)
    if n is None:
        raise ValueError("n is required for this family")
    return _generate_family(spec.family, spec.params, n, np.random.default_rng(spec.seed))


@dataclass(frozen=True)
class SemicircleSpec:
    """Semicircle law with centre ``x0`` and radius ``R`` inside ``[0, 1]``."""

    x0: float = 0.5
    R: float = 0.5

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError("radius must be positive")


def _check_support(spec, domain=(0.0, 1.0)):
    if spec.x0 - spec.R < domain[0] or spec.x0 + spec.R > domain[1]:
        raise ValueError("semicircle support must lie inside the domain")


def semicircle_power_moments_exact(spec: SemicircleSpec, m):
    """Raw power moments ``E[x^k]``, ``k = 1..m``, as exact fractions.

    Central moments are ``(R/2)^{2j} C_j`` for even order ``2j`` (Catalan
    ``C_j``) and zero for odd order; raw moments follow by the binomial
    shift by ``x0``.
    """
    x0, half_r = Fraction(spec.x0), Fraction(spec.R) / 2
    central = [Fraction(0)] * (m + 1)
    for j in range(m // 2 + 1):
        central[2 * j] = half_r ** (2 * j) * (comb(2 * j, j) // (j + 1))
    return [sum((comb(k, i) * central[i] * x0 ** (k - i) for i in range(k + 1)), Fraction(0))
            for k in range(1, m + 1)]


def semicircle_moments(spec: SemicircleSpec, m, basis=POWER, domain=(0.0, 1.0)) -> MomentVector:
    """Analytic semicircle moments; Chebyshev moments are converted exactly."""
    if m < 1:
        raise ValueError("need m >= 1")
    basis = _check_basis(basis)
    _check_support(spec, domain)
    exact = semicircle_power_moments_exact(spec, m)
    if basis == CHEBYSHEV:
        exact = convert_exact(exact, POWER, CHEBYSHEV)
    return MomentVector(basis, [float(v) for v in exact])


def semicircle_density(spec: SemicircleSpec, x):
    """``2 / (pi R^2) * sqrt(R^2 - (x - x0)^2)`` on the support, 0 elsewhere."""
    x = np.asarray(x, dtype=float)
    inside = np.clip(spec.R ** 2 - (x - spec.x0) ** 2, 0.0, None)
    return 2.0 / (np.pi * spec.R ** 2) * np.sqrt(inside)
