"""Downstream uses of fitted spectra: cluster counts, similarity, model fitting."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .generators import FAMILIES, ModelSpec, generate
from .graph import SparseGraph, make_operator
from .maxent import (EntropicSpectrum, MaxEntConvergenceError, QuadratureOverflowError,
                     SolverConfig, density_eval, log_density_derivatives,
                     maxent_fit, quadrature_rule, symmetric_kl)
from .moments import CHEBYSHEV, ProbeConfig, ste_moments

__all__ = [
    "NoSpectralGapError",
    "ClusterEstimate",
    "PerturbationBound",
    "SimilarityMatrix",
    "InferenceResult",
    "SearchConfig",
    "fit_graph",
    "estimate_clusters",
    "perturbation_bound",
    "first_order_shift",
    "similarity_matrix",
    "infer_parameter",
    "classify_network",
]

log = logging.getLogger(__name__)

FIT_ERRORS = (MaxEntConvergenceError, QuadratureOverflowError, FloatingPointError)
GRID_POINTS = 10_000
DEFAULT_ETA = 1e-2


class NoSpectralGapError(RuntimeError):
    """No flat valley separates near-zero eigenvalues from the bulk."""


def fit_graph(g: SparseGraph, m=30, cfg: ProbeConfig = None, solver: SolverConfig = None,
              basis=CHEBYSHEV) -> EntropicSpectrum:
    """Rescaled operator, trace-estimated moments and the maximum-entropy fit."""
    mv = ste_moments(make_operator(g), cfg or ProbeConfig(), m, basis)
    return maxent_fit(mv, solver or SolverConfig())


@dataclass(frozen=True)
class ClusterEstimate:
    n_clusters: float
    lambda_star: float
    eta: float
    mass: float

    @property
    def n_clusters_rounded(self) -> int:
        return int(round(self.n_clusters))

    def to_dict(self) -> dict:
        return {
            "lambda_star": self.lambda_star,
            "eta": self.eta,
            "mass": self.mass,
            "n_clusters": self.n_clusters,
            "n_clusters_rounded": self.n_clusters_rounded,
        }


def estimate_clusters(es: EntropicSpectrum, n, eta=DEFAULT_ETA, grid_points=GRID_POINTS):
    """Count near-disconnected clusters from the mass below the first spectral valley.

    Scans a uniform grid of ``(0, 1)`` for the smallest ``lam`` with
    ``|p'(lam)| <= eta`` and ``p''(lam) > 0``, then returns
    ``n * int_0^lam p``.

    Parameters
    ----------
    es : EntropicSpectrum
        Fit on the rescaled domain.
    n : int
        Number of nodes.
    eta : float
        Absolute derivative tolerance.

    Raises
    ------
    NoSpectralGapError
        If no grid point qualifies, or the valley holds no mass.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    if n < 1:
        raise ValueError("n must be positive")
    grid = np.linspace(0.0, 1.0, grid_points + 2)[1:-1]
    # work with q = -log p so deep valleys do not underflow
    q1, q2 = log_density_derivatives(es, grid)
    logp = es.log_density(grid)
    with np.errstate(over="ignore", under="ignore"):
        slope = np.exp(logp + np.log(np.abs(q1) + 1e-300))
    ok = (slope <= eta) & (q1 * q1 - q2 > 0)
    hits = np.flatnonzero(ok)
    if hits.size == 0:
        raise NoSpectralGapError("no spectral gap detected")
    lam = float(grid[hits[0]])
    x, w = quadrature_rule(es.quadrature, es.quadrature_order)
    below = x <= lam
    mass = float(w[below] @ density_eval(es, x[below]))
    if not 0.0 < mass < 1.0:
        raise NoSpectralGapError(f"valley at {lam:.4g} encloses mass {mass:.3g}")
    return ClusterEstimate(n * mass, lam, float(eta), mass)


@dataclass(frozen=True)
class PerturbationBound:
    bound: float
    first_order: float


def _neighbour_sum(degrees):
    degrees = np.asarray(degrees, dtype=float)
    if degrees.size == 0:
        raise ValueError("neighbour degree list is empty")
    if np.any(degrees < 1):
        raise ValueError("degrees must be at least 1")
    return float(np.sum(1.0 / np.sqrt(np.sort(degrees))))


def perturbation_bound(deg1, deg2, nbr_degrees_1, nbr_degrees_2) -> PerturbationBound:
    """Bound on the shift of a zero eigenvalue when one edge joins two clusters.

    The edge joins node 1 (degree ``deg1``) and node 2 (degree ``deg2``);
    ``nbr_degrees_*`` are the degrees of their neighbours before the edge
    is added.  ``bound`` is

        | 1/sqrt(d1 da) + 1/sqrt(d2 db) - 2/sqrt(d1 d2) |,
        1/sqrt(da) = sum_g 1/sqrt(dg)  over neighbours g of node 1,

    and ``first_order`` is the entrywise change of the normalised Laplacian
    it is derived from (see :func:`first_order_shift`).
    """
    if deg1 < 1 or deg2 < 1:
        raise ValueError("degrees must be at least 1")
    inv_da = _neighbour_sum(nbr_degrees_1)
    inv_db = _neighbour_sum(nbr_degrees_2)
    bound = abs(inv_da / math.sqrt(deg1) + inv_db / math.sqrt(deg2) - 2.0 / math.sqrt(deg1 * deg2))
    return PerturbationBound(bound, first_order_shift(deg1, deg2, nbr_degrees_1, nbr_degrees_2))


def first_order_shift(deg1, deg2, nbr_degrees_1, nbr_degrees_2) -> float:
    """Change of the normalised Laplacian entries when the endpoints gain a degree.

        | sum_g (1/sqrt(d1 dg) - 1/sqrt((d1+1) dg)) + (same for node 2) - 2/sqrt(d1 d2) |

    For two ``d``-regular clusters this is ``1/d`` to leading order.
    """
    if deg1 < 1 or deg2 < 1:
        raise ValueError("degrees must be at least 1")
    inv_da = _neighbour_sum(nbr_degrees_1)
    inv_db = _neighbour_sum(nbr_degrees_2)
    c1 = 1.0 / math.sqrt(deg1) - 1.0 / math.sqrt(deg1 + 1)
    c2 = 1.0 / math.sqrt(deg2) - 1.0 / math.sqrt(deg2 + 1)
    return abs(c1 * inv_da + c2 * inv_db - 2.0 / math.sqrt(deg1 * deg2))


@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    """Pairwise symmetric KL divergences; ``nan`` marks entries whose fit failed."""

    labels: tuple
    values: np.ndarray
    moments_used: int
    failed: tuple = ()

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)

    def to_dict(self) -> dict:
        vals = [[None if np.isnan(v) else float(v) for v in row] for row in self.values]
        return {"labels": list(self.labels), "moments_used": self.moments_used,
                "values": vals, "failed": list(self.failed)}

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([""] + list(self.labels))
        for label, row in zip(self.labels, self.values):
            writer.writerow([label] + ["" if np.isnan(v) else f"{v:.8g}" for v in row])
        return buf.getvalue()


def _map(fn, items, threads):
    if threads is None or threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _safe_fit(g, m, cfg, solver, basis):
    try:
        return fit_graph(g, m, cfg, solver, basis)
    except FIT_ERRORS as exc:
        log.warning("fit failed: %s", exc)
        return None


def similarity_matrix(graphs, m=100, cfg: ProbeConfig = None, solver: SolverConfig = None,
                      labels=None, basis=CHEBYSHEV, threads=1) -> SimilarityMatrix:
    """Fit every graph and fill the symmetric KL matrix.

    A graph whose fit fails leaves its row and column as ``nan``; the other
    entries are still computed.
    """
    graphs = list(graphs)
    if len(graphs) < 2:
        raise ValueError("need at least two graphs")
    labels = tuple(labels) if labels is not None else tuple(f"g{i}" for i in range(len(graphs)))
    if len(labels) != len(graphs):
        raise ValueError("one label per graph")
    fits = _map(lambda g: _safe_fit(g, m, cfg, solver, basis), graphs, threads)
    k = len(graphs)
    values = np.full((k, k), np.nan)
    for i in range(k):
        if fits[i] is None:
            continue
        values[i, i] = 0.0
        for j in range(i + 1, k):
            if fits[j] is not None:
                values[i, j] = values[j, i] = symmetric_kl(fits[i], fits[j])
    failed = tuple(labels[i] for i in range(k) if fits[i] is None)
    return SimilarityMatrix(labels, values, m, failed)


@dataclass(frozen=True)
class SearchConfig:
    """Parameter search settings.

    ``p_range`` bounds the search over ``p`` for ``ER``/``WS``, carried out
    in ``log p`` when ``log_p`` is set.  ``evaluations`` is its total
    budget: ``coarse`` evenly spaced points first, then golden-section
    search in the bracket around the best of them.  ``r_grid`` is the number of
    coarse grid points for ``BA`` before integer refinement.  Every
    candidate graph is generated with ``seed``.
    """

    p_range: tuple = (0.01, 0.99)
    evaluations: int = 20
    log_p: bool = True
    coarse: int = 8
    r_range: tuple | None = None
    r_grid: int = 12
    ws_k: int = 4
    seed: int = 12345


@dataclass(frozen=True)
class InferenceResult:
    family: str
    parameter: float
    divergence: float
    evaluations: tuple = field(default=(), repr=False)


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_section(f, lo, hi, budget):
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(budget - 2):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)


def _bracketed_golden(f, lo, hi, coarse, budget):
    """Coarse grid, then golden section between the neighbours of its best point.

    The objective is far from unimodal over the whole range, so golden
    section alone can settle in the wrong valley.
    """
    if coarse < 2:
        _golden_section(f, lo, hi, budget)
        return
    if budget < coarse + 2:
        raise ValueError("evaluation budget must exceed the coarse grid by at least 2")
    grid = np.linspace(lo, hi, coarse)
    vals = [f(t) for t in grid]
    best = int(np.argmin(vals))
    _golden_section(f, grid[max(best - 1, 0)], grid[min(best + 1, coarse - 1)], budget - coarse)


def _integer_search(f, lo, hi, points):
    """Coarse geometric grid over ``[lo, hi]``, then integer ternary search in the best bracket."""
    grid = np.unique(np.round(np.geomspace(lo, hi, min(points, hi - lo + 1))).astype(int))
    vals = [f(int(r)) for r in grid]
    best = int(np.argmin(vals))
    a = int(grid[max(best - 1, 0)])
    b = int(grid[min(best + 1, grid.size - 1)])
    while b - a > 2:
        m1 = a + (b - a) // 3
        m2 = b - (b - a) // 3
        if f(m1) <= f(m2):
            b = m2
        else:
            a = m1
    for r in range(a, b + 1):
        f(r)


def _candidate_spec(family, value, search):
    if family == "ER":
        return ModelSpec("ER", {"p": value, "coupled": True}, search.seed)
    if family == "WS":
        return ModelSpec("WS", {"k": search.ws_k, "p": value}, search.seed)
    if family == "BA":
        return ModelSpec("BA", {"r": int(value)}, search.seed)
    raise ValueError(f"cannot infer parameters of family {family!r}")


def infer_parameter(target: EntropicSpectrum, model, n, search: SearchConfig = None,
                    cfg: ProbeConfig = None, solver: SolverConfig = None) -> InferenceResult:
    """Parameter of ``model`` whose ``n``-node graphs best match ``target``.

    Each candidate parameter generates one graph (always with
    ``search.seed``, and for ``ER`` with the coupled sampler so that nearby
    ``p`` give nearly the same graph), is fitted with the same moment count and basis as
    ``target``, and scores its symmetric KL divergence to ``target``.
    ``ER``/``WS`` use golden-section search over ``p``; ``BA`` searches the
    integer ``r`` on a coarse grid followed by a ternary refinement.

    Raises
    ------
    MaxEntConvergenceError
        If no candidate could be fitted.
    """
    family = model.family if isinstance(model, ModelSpec) else str(model)
    if family not in FAMILIES or family == "planted":
        raise ValueError(f"cannot infer parameters of family {family!r}")
    search = search or SearchConfig()
    cache = {}

    def objective(value):
        key = int(value) if family == "BA" else float(value)
        if key in cache:
            return cache[key]
        g = generate(_candidate_spec(family, key, search), n)
        es = _safe_fit(g, target.m, cfg, solver, target.basis)
        cache[key] = math.inf if es is None else symmetric_kl(target, es)
        return cache[key]

    if family == "BA":
        lo, hi = search.r_range or (1, n - 1)
        if not 1 <= lo <= hi <= n - 1:
            raise ValueError("r range must lie in 1..n-1")
        _integer_search(objective, lo, hi, search.r_grid)
    else:
        lo, hi = search.p_range
        if not 0.0 < lo < hi < 1.0:
            raise ValueError("p range must lie inside (0, 1)")
        if search.log_p:
            _bracketed_golden(lambda t: objective(math.exp(t)), math.log(lo), math.log(hi),
                              search.coarse, search.evaluations)
        else:
            _bracketed_golden(objective, lo, hi, search.coarse, search.evaluations)

    finite = {k: v for k, v in cache.items() if np.isfinite(v)}
    if not finite:
        raise MaxEntConvergenceError("every candidate fit failed", iterations=len(cache))
    best = min(finite, key=finite.get)
    return InferenceResult(family, float(best), float(finite[best]), tuple(sorted(cache.items())))


def classify_network(target: EntropicSpectrum, n0, cfg: ProbeConfig = None,
                     solver: SolverConfig = None, search: SearchConfig = None,
                     families=("ER", "WS", "BA")):
    """Rank model families by their best achievable divergence to ``target``.

    Returns a list of :class:`InferenceResult`, smallest divergence first.
    """
    results = [infer_parameter(target, fam, n0, search, cfg, solver) for fam in families]
    return sorted(results, key=lambda r: r.divergence)
