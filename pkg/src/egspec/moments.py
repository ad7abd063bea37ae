"""Spectral moments: stochastic trace estimation and basis conversion.

Two bases are used on the rescaled domain ``[0, 1]``:

* ``power``: ``phi_i(x) = x**i``
* ``chebyshev_shifted``: ``phi_i(x) = T_i(2x - 1)``

The zeroth moment is always 1 and is not stored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from fractions import Fraction
from functools import lru_cache

import numpy as np

__all__ = [
    "POWER",
    "CHEBYSHEV",
    "BASES",
    "MomentVector",
    "ProbeConfig",
    "basis_values",
    "basis_derivatives",
    "ste_moments",
    "exact_moments",
    "basis_convert",
    "shifted_chebyshev_coefficients",
]

POWER = "power"
CHEBYSHEV = "chebyshev_shifted"
BASES = (POWER, CHEBYSHEV)
MAX_CONVERT_ORDER = 120


def _check_basis(basis):
    if basis == "chebyshev":
        return CHEBYSHEV
    if basis not in BASES:
        raise ValueError(f"unknown basis {basis!r}; expected one of {BASES}")
    return basis


@dataclass(frozen=True)
class ProbeConfig:
    """Random probe settings for trace estimation.

    ``normalization="probe_norm"`` divides each quadratic form by
    ``v.T v`` (each probe then contributes the moments of a probability
    measure); ``"dimension"`` divides by ``n``.  Both are unbiased for
    Gaussian probes.
    """

    d: int = 100
    distribution: str = "gaussian"
    seed: int = 0
    normalization: str = "probe_norm"

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("need at least one probe")
        if self.distribution not in ("gaussian", "rademacher"):
            raise ValueError(f"unknown probe distribution {self.distribution!r}")
        if self.normalization not in ("probe_norm", "dimension"):
            raise ValueError(f"unknown normalization {self.normalization!r}")

    def probes(self, n) -> np.ndarray:
        """The ``(n, d)`` probe block.

        Probe ``j`` is drawn from its own child of ``SeedSequence(seed)``, so
        any subset of probes can be regenerated independently.
        """
        children = np.random.SeedSequence(self.seed).spawn(self.d)
        out = np.empty((n, self.d))
        for j, child in enumerate(children):
            rng = np.random.default_rng(child)
            if self.distribution == "gaussian":
                out[:, j] = rng.standard_normal(n)
            else:
                out[:, j] = rng.integers(0, 2, n) * 2.0 - 1.0
        return out


@dataclass(frozen=True)
class MomentVector:
    """Moments ``mu_1 .. mu_m`` of a spectral density on ``[0, 1]``."""

    basis: str
    values: np.ndarray
    probes_used: int = 0
    seed: int | None = None
    estimator_variance: np.ndarray | None = None
    domain: tuple = (0.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "basis", _check_basis(self.basis))
        values = np.asarray(self.values, dtype=float).copy()
        if values.ndim != 1 or values.size < 1:
            raise ValueError("need a 1-d sequence of at least one moment")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.estimator_variance is not None:
            var = np.asarray(self.estimator_variance, dtype=float).copy()
            var.setflags(write=False)
            object.__setattr__(self, "estimator_variance", var)

    @property
    def m(self) -> int:
        return self.values.size

    @property
    def standard_error(self):
        if self.estimator_variance is None or self.probes_used < 1:
            return None
        return np.sqrt(self.estimator_variance / self.probes_used)

    def truncate(self, m) -> "MomentVector":
        var = None if self.estimator_variance is None else self.estimator_variance[:m]
        return MomentVector(self.basis, self.values[:m], self.probes_used, self.seed, var,
                            self.domain)

    def to_dict(self) -> dict:
        return {
            "basis": self.basis,
            "m": self.m,
            "d": self.probes_used,
            "seed": self.seed,
            "values": [float(v) for v in self.values],
            "variance": None if self.estimator_variance is None
            else [float(v) for v in self.estimator_variance],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data) -> "MomentVector":
        values = data["values"]
        if "m" in data and data["m"] != len(values):
            raise ValueError("moment count does not match 'm'")
        return cls(data["basis"], values, data.get("d") or 0, data.get("seed"),
                   data.get("variance"))

    @classmethod
    def from_json(cls, text) -> "MomentVector":
        return cls.from_dict(json.loads(text))


def basis_values(basis, x, m, derivatives=0):
    """Evaluate ``phi_1..phi_m`` (and optionally derivatives) at ``x``.

    Returns an array of shape ``(derivatives + 1, m, len(x))``; slice ``k``
    holds the ``k``-th derivative with respect to ``x``.  Derivatives come
    from differentiating the three-term recurrence.
    """
    basis = _check_basis(basis)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty((derivatives + 1, m + 1, x.size))
    if basis == POWER:
        powers = np.ones((m + 1, x.size))
        for i in range(1, m + 1):
            powers[i] = powers[i - 1] * x
        out[0] = powers
        for k in range(1, derivatives + 1):
            out[k, :k] = 0.0
            for i in range(k, m + 1):
                # d^k/dx^k x^i = i!/(i-k)! x^(i-k)
                out[k, i] = np.prod(np.arange(i - k + 1, i + 1)) * powers[i - k]
        return out[:, 1:]
    t = 2.0 * x - 1.0
    # T_{i+1} = 2t T_i - T_{i-1}, with dt/dx = 2; the k-th derivative obeys
    # T^(k)_{i+1} = 2t T^(k)_i + 2k T^(k-1)_i - T^(k)_{i-1}  (in t)
    out[0, 0] = 1.0
    if m >= 1:
        out[0, 1] = t
    for i in range(1, m):
        out[0, i + 1] = 2.0 * t * out[0, i] - out[0, i - 1]
    for k in range(1, derivatives + 1):
        out[k, 0] = 0.0
        if m >= 1:
            out[k, 1] = 1.0 if k == 1 else 0.0
        for i in range(1, m):
            out[k, i + 1] = 2.0 * t * out[k, i] + 2.0 * k * out[k - 1, i] - out[k, i - 1]
    for k in range(1, derivatives + 1):
        out[k] *= 2.0 ** k
    return out[:, 1:]


def basis_derivatives(basis, x, m):
    """``(phi, phi', phi'')`` each of shape ``(m, len(x))``."""
    vals = basis_values(basis, x, m, derivatives=2)
    return vals[0], vals[1], vals[2]


def ste_moments(op, cfg: ProbeConfig = None, m=30, basis=CHEBYSHEV) -> MomentVector:
    """Estimate ``mu_i = E[phi_i(lambda)]`` by stochastic trace estimation.

    Parameters
    ----------
    op : SpectralOperator
        Must be in rescaled mode (spectrum in ``[0, 1]``).
    cfg : ProbeConfig
    m : int
        Number of moments.
    basis : {"chebyshev_shifted", "power"}

    Notes
    -----
    For every probe ``v`` the quadratic forms ``v.T phi_i(X) v`` are built
    from one running Krylov vector per moment: ``X^i v`` in the power basis,
    and the recurrence ``w_{k+1} = 2(2X - I) w_k - w_{k-1}`` in the shifted
    Chebyshev basis.  Cost is ``O(d m nnz)``.  All probes are propagated
    together as one ``(n, d)`` block.
    """
    basis = _check_basis(basis)
    cfg = cfg or ProbeConfig()
    if m < 1:
        raise ValueError("need m >= 1 moments")
    if not getattr(op, "rescaled", False):
        raise ValueError("trace estimation needs the rescaled operator (spectrum in [0, 1])")
    n = op.n
    v = cfg.probes(n)
    if cfg.normalization == "probe_norm":
        norm = np.einsum("ij,ij->j", v, v)
    else:
        norm = np.full(cfg.d, float(n))

    rho = np.empty((m, cfg.d))
    if basis == POWER:
        w = v
        for i in range(m):
            w = op.matvec(w)
            rho[i] = np.einsum("ij,ij->j", v, w)
    else:
        w_prev = v
        w = 2.0 * op.matvec(v) - v
        rho[0] = np.einsum("ij,ij->j", v, w)
        for i in range(1, m):
            w_next = 2.0 * (2.0 * op.matvec(w) - w) - w_prev
            w_prev, w = w, w_next
            rho[i] = np.einsum("ij,ij->j", v, w)
    rho /= norm
    var = rho.var(axis=1, ddof=1) if cfg.d > 1 else np.zeros(m)
    return MomentVector(basis, rho.mean(axis=1), cfg.d, cfg.seed, var)


def exact_moments(dirac, m, basis=CHEBYSHEV) -> MomentVector:
    """Moments of a weighted Dirac mixture (anything with ``atoms``/``weights``)."""
    basis = _check_basis(basis)
    atoms = np.asarray(dirac.atoms, dtype=float)
    weights = np.asarray(dirac.weights, dtype=float)
    if abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError(f"weights sum to {weights.sum()!r}, not 1")
    phi = basis_values(basis, atoms, m)[0]
    return MomentVector(basis, phi @ weights)


@lru_cache(maxsize=None)
def _shifted_chebyshev_table(m):
    """Integer monomial coefficients of ``T_k(2x - 1)`` for ``k <= m``."""
    rows = [[1], [-1, 2]]
    for k in range(1, m):
        prev, cur = rows[k - 1], rows[k]
        nxt = [0] * (k + 2)
        for j, c in enumerate(cur):
            nxt[j] -= 2 * c
            nxt[j + 1] += 4 * c
        for j, c in enumerate(prev):
            nxt[j] -= c
        rows.append(nxt)
    return tuple(tuple(r) for r in rows[: m + 1])


def shifted_chebyshev_coefficients(m):
    """Exact integer matrix ``C`` with ``T_k(2x-1) = sum_j C[k][j] x**j``.

    Returned as nested tuples of Python ints, ``k, j = 0..m``.
    """
    if m > MAX_CONVERT_ORDER:
        raise ValueError(f"basis conversion is capped at order {MAX_CONVERT_ORDER}")
    return _shifted_chebyshev_table(max(m, 1))[: m + 1]


def _to_fractions(values):
    return [Fraction(1)] + [v if isinstance(v, Fraction) else Fraction(float(v)) for v in values]


def convert_exact(values, source, target):
    """Change basis on exact rationals; ``values`` exclude the zeroth moment."""
    source, target = _check_basis(source), _check_basis(target)
    mu = _to_fractions(values)
    m = len(mu) - 1
    if source == target:
        return mu[1:]
    table = shifted_chebyshev_coefficients(m)
    if source == POWER:
        return [sum((Fraction(c) * mu[j] for j, c in enumerate(table[k])), Fraction(0))
                for k in range(1, m + 1)]
    # chebyshev -> power: triangular solve, T_k = c_kk x^k + lower terms
    power = [Fraction(1)]
    for k in range(1, m + 1):
        row = table[k]
        acc = mu[k] - sum((Fraction(row[j]) * power[j] for j in range(k)), Fraction(0))
        power.append(acc / row[k])
    return power[1:]


def basis_convert(mv: MomentVector, target_basis) -> MomentVector:
    """Exact linear change between power and shifted-Chebyshev moments.

    The float inputs are taken as exact binary rationals and the map is
    applied in rational arithmetic, so the only rounding is the final one.
    Power-to-Chebyshev is still ill-conditioned as a function of its input:
    relative input errors grow by roughly ``5.8**m``.
    """
    target_basis = _check_basis(target_basis)
    if mv.m > MAX_CONVERT_ORDER:
        raise ValueError(f"basis conversion is capped at order {MAX_CONVERT_ORDER}")
    if target_basis == mv.basis:
        return mv
    vals = convert_exact(mv.values, mv.basis, target_basis)
    return MomentVector(target_basis, [float(v) for v in vals], mv.probes_used, mv.seed, None,
                        mv.domain)
