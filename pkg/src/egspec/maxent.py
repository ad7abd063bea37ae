"""Maximum-entropy densities on ``[0, 1]`` matching a set of moments.

The fitted density is an exponential polynomial

    p(x) = exp(-(alpha0 + sum_i alpha_i phi_i(x)))

where ``alpha0 = log Z(alpha)`` keeps ``p`` normalised.  The coefficients
minimise the convex dual

    F(alpha) = log Z(alpha) + sum_i alpha_i mu_i,
    Z(alpha) = int_0^1 exp(-sum_i alpha_i phi_i(x)) dx,

whose gradient is ``mu - E_p[phi]`` and whose Hessian is the covariance of
``phi`` under ``p``.  Integrals use a fixed quadrature rule, Gauss-Lobatto by
default so that the endpoints (where graph spectra often pile up mass) are
nodes of the rule.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
from scipy.special import eval_legendre, roots_jacobi, roots_legendre

from .moments import (CHEBYSHEV, MAX_CONVERT_ORDER, POWER, MomentVector, _check_basis,
                      basis_values, convert_exact, shifted_chebyshev_coefficients)

__all__ = [
    "SolverConfig",
    "EntropicSpectrum",
    "MaxEntConvergenceError",
    "QuadratureOverflowError",
    "gauss_legendre01",
    "maxent_fit",
    "density_eval",
    "density_derivatives",
    "log_density_derivatives",
    "differential_entropy",
    "kl_divergence",
    "symmetric_kl",
]

log = logging.getLogger(__name__)

_EXP_LIMIT = 700.0


class MaxEntConvergenceError(RuntimeError):
    """The Newton iteration did not reach the moment tolerance."""

    def __init__(self, message, residual=np.inf, alpha=None, iterations=0):
        super().__init__(f"{message} (best residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.alpha = alpha
        self.iterations = iterations


class QuadratureOverflowError(FloatingPointError):
    """Exponent of the density left the representable range."""


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-6
    max_iters: int = 2000
    quadrature_order: int | None = None
    quadrature: str = "lobatto"
    ridge: float = 1e-10
    armijo: float = 1e-4
    shrink: float = 0.5
    min_step: float = 1e-12
    max_coefficient_norm: float = 1e6
    power_via_chebyshev: bool = True

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.quadrature_order is not None and self.quadrature_order < 3:
            raise ValueError("quadrature_order must be at least 3")
        if self.quadrature not in _RULES:
            raise ValueError(f"quadrature must be one of {tuple(_RULES)}")

    def order_for(self, m):
        """Quadrature order used for ``m`` moments (``max(512, 64 m)`` by default)."""
        if self.quadrature_order is not None:
            return self.quadrature_order
        return max(512, 64 * m)


@lru_cache(maxsize=16)
def gauss_legendre01(order):
    """Gauss-Legendre nodes and weights on ``[0, 1]``."""
    x, w = roots_legendre(order)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=16)
def gauss_lobatto01(order):
    """Gauss-Lobatto-Legendre nodes and weights on ``[0, 1]``, endpoints included.

    Interior nodes are the roots of ``P'_{N-1}`` (Jacobi ``(1, 1)`` roots);
    weights are ``2 / (N (N-1) P_{N-1}(x)^2)`` on ``[-1, 1]``.
    """
    if order < 3:
        raise ValueError("Lobatto rule needs at least 3 nodes")
    inner, _ = roots_jacobi(order - 2, 1.0, 1.0)
    x = np.concatenate([[-1.0], inner, [1.0]])
    w = 2.0 / (order * (order - 1) * eval_legendre(order - 1, x) ** 2)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


_RULES = {"lobatto": gauss_lobatto01, "legendre": gauss_legendre01}


def quadrature_rule(kind, order):
    """Nodes and weights of the named rule on ``[0, 1]``."""
    return _RULES[kind](order)


@lru_cache(maxsize=32)
def _basis_on_nodes(basis, m, order, kind="lobatto"):
    x, _ = quadrature_rule(kind, order)
    phi = basis_values(basis, x, m)[0]
    phi.setflags(write=False)
    return phi


class _Dual:
    """Dual objective evaluated on a fixed quadrature rule."""

    def __init__(self, basis, mu, order, kind="lobatto"):
        self.mu = mu
        self.x, self.w = quadrature_rule(kind, order)
        self.phi = _basis_on_nodes(basis, mu.size, order, kind)

    def log_partition(self, alpha):
        e = -(alpha @ self.phi)
        top = e.max()
        if not np.isfinite(top):
            raise QuadratureOverflowError("non-finite exponent in density")
        s = np.exp(e - top) @ self.w
        return top + np.log(s), e

    def value(self, alpha):
        logz, _ = self.log_partition(alpha)
        return logz + alpha @ self.mu

    def state(self, alpha):
        """Objective, gradient, Hessian, fitted moments and ``alpha0``."""
        logz, e = self.log_partition(alpha)
        q = self.w * np.exp(e - logz)
        q /= q.sum()
        mean = self.phi @ q
        centred = self.phi - mean[:, None]
        hess = (centred * q) @ centred.T
        return logz + alpha @ self.mu, self.mu - mean, hess, mean, logz


@lru_cache(maxsize=16)
def _power_to_chebyshev_map(m):
    """Matrix ``M`` with ``x^j = sum_k M[j, k] T_k(2x - 1)``, ``j, k = 1..m``."""
    from fractions import Fraction
    table = shifted_chebyshev_coefficients(m)
    # invert the lower-triangular monomial expansion row by row
    inv = []
    for j in range(m + 1):
        row = [Fraction(0)] * (m + 1)
        row[j] = Fraction(1, table[j][j])
        for k in range(j):
            row[k] -= sum((Fraction(table[j][i]) * inv[i][k] for i in range(k, j)),
                          Fraction(0)) / table[j][j]
        inv.append(row)
    out = np.array([[float(v) for v in r[1:]] for r in inv[1:]])
    out.setflags(write=False)
    return out


def _coefficient_norm(alpha, basis):
    """Norm of the exponent's coefficients in the shifted Chebyshev basis.

    Monomial coefficients of a perfectly tame density grow like ``4**m``,
    so the divergence test is made in a basis where they do not.
    """
    if basis == POWER and alpha.size <= MAX_CONVERT_ORDER:
        return np.linalg.norm(alpha @ _power_to_chebyshev_map(alpha.size))
    return np.linalg.norm(alpha)


def _newton_direction(hess, grad, ridge):
    scale = np.sqrt(np.clip(np.diag(hess), 1e-300, None))
    h = hess / np.outer(scale, scale)
    g = grad / scale
    jitter = ridge
    eye = np.eye(h.shape[0])
    while jitter < 1e6:
        try:
            c = sla.cho_factor(h + jitter * eye, lower=True, check_finite=False)
            step = -sla.cho_solve(c, g, check_finite=False) / scale
            if np.all(np.isfinite(step)):
                return step
        except (np.linalg.LinAlgError, ValueError):
            pass
        jitter *= 10.0
    return -grad


@dataclass(frozen=True, eq=False)
class EntropicSpectrum:
    """A fitted maximum-entropy spectral density on ``[0, 1]``."""

    basis: str
    alpha: np.ndarray
    alpha0: float
    target_moments: np.ndarray
    fitted_moments: np.ndarray
    residual: float
    quadrature_order: int = 512
    quadrature: str = "lobatto"
    iterations: int = 0
    domain: tuple = (0.0, 1.0)

    def __post_init__(self):
        for name in ("alpha", "target_moments", "fitted_moments"):
            arr = np.asarray(getattr(self, name), dtype=float).copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def m(self) -> int:
        return self.alpha.size

    def log_density(self, x):
        x = _check_domain(x)
        return -(self.alpha0 + self.alpha @ basis_values(self.basis, x, self.m)[0])

    def __call__(self, x):
        return density_eval(self, x)

    def entropy(self):
        return differential_entropy(self)

    def to_dict(self) -> dict:
        return {
            "basis": self.basis,
            "alpha0": float(self.alpha0),
            "alpha": [float(a) for a in self.alpha],
            "residual": float(self.residual),
            "target_moments": [float(v) for v in self.target_moments],
            "fitted_moments": [float(v) for v in self.fitted_moments],
            "quadrature_order": self.quadrature_order,
            "quadrature": self.quadrature,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data) -> "EntropicSpectrum":
        alpha = np.asarray(data["alpha"], dtype=float)
        order = int(data.get("quadrature_order", 512))
        kind = data.get("quadrature", "lobatto")
        fitted = data.get("fitted_moments")
        if fitted is None:
            phi = _basis_on_nodes(data["basis"], alpha.size, order, kind)
            _, w = quadrature_rule(kind, order)
            fitted = phi @ (w * np.exp(-(data["alpha0"] + alpha @ phi)))
        return cls(data["basis"], alpha, float(data["alpha0"]), data["target_moments"],
                   fitted, float(data["residual"]), order, kind)

    @classmethod
    def from_json(cls, text) -> "EntropicSpectrum":
        return cls.from_dict(json.loads(text))

    def to_csv(self, dest=None, points=1001) -> str:
        """Density sampled on a uniform grid as ``lambda,p`` CSV."""
        x = np.linspace(0.0, 1.0, points)
        p = density_eval(self, x)
        lines = ["lambda,p"] + [f"{a:.8g},{b:.8g}" for a, b in zip(x, p)]
        text = "\n".join(lines) + "\n"
        if dest is not None:
            with open(dest, "w") as fh:
                fh.write(text)
        return text


def _check_domain(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0) or np.any(x > 1.0) or np.any(np.isnan(x)):
        raise ValueError("density is only defined on [0, 1]")
    return x


def maxent_fit(mv: MomentVector, cfg: SolverConfig = None, alpha_init=None,
               callback=None) -> EntropicSpectrum:
    """Fit the maximum-entropy density matching ``mv`` by damped Newton.

    Starts from the uniform density (``alpha = 0``) unless ``alpha_init`` is
    given.  Converges when ``max_i |E_p[phi_i] - mu_i| <= cfg.tol``.
    ``callback(iteration, alpha, dual_value, residual)`` is called at every
    iterate, including the starting point.

    Power moments are badly conditioned (a residual of ``1e-8`` leaves the
    density undetermined beyond ``m ~ 8``), so with
    ``cfg.power_via_chebyshev`` they are converted exactly to the shifted
    Chebyshev basis, fitted there, and the coefficients mapped back.  The
    residual is still checked against the original power moments; if it
    misses ``tol``, Newton continues in the power basis from that point.

    Raises
    ------
    MaxEntConvergenceError
        After ``cfg.max_iters`` iterations, when the line search stalls, or
        when the coefficients blow up (moments of a point mass).
    QuadratureOverflowError
        When the density exponent exceeds the floating-point range.
    """
    cfg = cfg or SolverConfig()
    basis = _check_basis(mv.basis)
    mu = np.asarray(mv.values, dtype=float)
    m = mu.size
    order = cfg.order_for(m)
    if order < 2 * m + 1:
        raise ValueError("quadrature_order must be at least 2m + 1")
    alpha = np.zeros(m) if alpha_init is None else np.asarray(alpha_init, dtype=float).copy()

    if basis == POWER and cfg.power_via_chebyshev and m <= MAX_CONVERT_ORDER:
        mu_c = np.array([float(v) for v in convert_exact(mu, POWER, CHEBYSHEV)])
        start = alpha @ _power_to_chebyshev_map(m)
        try:
            beta, logz, _, _, it = _newton(CHEBYSHEV, mu_c, cfg, order, start, callback)
        except MaxEntConvergenceError as exc:
            # rounding in the converted targets can leave tol out of reach;
            # the power-basis polish below decides
            beta, it = exc.alpha, exc.iterations
            logz = _Dual(CHEBYSHEV, mu_c, order, cfg.quadrature).state(beta)[4]
        table = shifted_chebyshev_coefficients(m)
        lift = np.array([[float(c) for c in row] + [0.0] * (m + 1 - len(row))
                         for row in table[1:]])
        alpha = beta @ lift[:, 1:]
        logz = logz + beta @ lift[:, 0]
        dual = _Dual(POWER, mu, order, cfg.quadrature)
        fitted = dual.phi @ (dual.w * np.exp(-(logz + alpha @ dual.phi)))
        res = float(np.abs(fitted - mu).max())
        if res > cfg.tol:
            alpha, logz, fitted, res, more = _newton(POWER, mu, cfg, order, alpha, callback)
            it += more
    else:
        alpha, logz, fitted, res, it = _newton(basis, mu, cfg, order, alpha, callback)

    if np.max(-(alpha @ _basis_on_nodes(basis, m, order, cfg.quadrature))) - logz > _EXP_LIMIT:
        raise QuadratureOverflowError(
            "density exponent exceeds 700; rescale the moment basis or reduce m")
    log.debug("maxent fit: m=%d iterations=%d residual=%.3e", m, it, res)
    return EntropicSpectrum(basis, alpha, float(logz), mu, fitted, float(res),
                            order, cfg.quadrature, it, tuple(mv.domain))


def _newton(basis, mu, cfg, order, alpha, callback=None):
    """Damped Newton on the dual; returns ``(alpha, logz, fitted, residual, iterations)``."""
    dual = _Dual(basis, mu, order, cfg.quadrature)
    f, grad, hess, fitted, logz = dual.state(alpha)
    best = (np.abs(grad).max(), alpha, fitted, logz)
    it = 0
    while True:
        res = np.abs(grad).max()
        if callback is not None:
            callback(it, alpha, f, res)
        if res < best[0]:
            best = (res, alpha, fitted, logz)
        if res <= cfg.tol:
            break
        if it >= cfg.max_iters:
            raise MaxEntConvergenceError("maximum iterations reached", best[0], best[1], it)
        if _coefficient_norm(alpha, basis) > cfg.max_coefficient_norm:
            raise MaxEntConvergenceError(
                "coefficients diverged; moments look like a point spectrum", best[0], best[1], it)
        step = _newton_direction(hess, grad, cfg.ridge)
        slope = grad @ step
        if slope >= 0:
            step, slope = -grad, -(grad @ grad)
        t = 1.0
        while True:
            trial = alpha + t * step
            try:
                f_new = dual.value(trial)
            except QuadratureOverflowError:
                f_new = np.inf
            if np.isfinite(f_new) and f_new <= f + cfg.armijo * t * slope:
                break
            t *= cfg.shrink
            if t < cfg.min_step:
                raise MaxEntConvergenceError("line search stalled", best[0], best[1], it)
        alpha = trial
        f, grad, hess, fitted, logz = dual.state(alpha)
        it += 1
    return alpha, logz, fitted, float(res), it


def density_eval(es: EntropicSpectrum, x):
    """Density values at points of ``[0, 1]``."""
    return np.exp(es.log_density(x))


def density_derivatives(es: EntropicSpectrum, x):
    """First and second derivatives ``(p', p'')`` at ``x``.

    With ``q = alpha0 + sum alpha_i phi_i`` and ``p = exp(-q)``:
    ``p' = -p q'`` and ``p'' = p (q'^2 - q'')``.
    """
    x = _check_domain(x)
    phi, d1, d2 = basis_values(es.basis, np.atleast_1d(x), es.m, derivatives=2)
    p = np.exp(-(es.alpha0 + es.alpha @ phi))
    q1 = es.alpha @ d1
    q2 = es.alpha @ d2
    dp, ddp = -p * q1, p * (q1 * q1 - q2)
    if np.ndim(x) == 0:
        return dp[0], ddp[0]
    return dp, ddp


def log_density_derivatives(es: EntropicSpectrum, x):
    """Derivatives ``(q', q'')`` of the exponent ``q = -log p``.

    Useful where ``p`` itself underflows: ``p' = -p q'`` and
    ``sign(p'') = sign(q'^2 - q'')``.
    """
    x = _check_domain(np.atleast_1d(x))
    _, d1, d2 = basis_values(es.basis, x, es.m, derivatives=2)
    return es.alpha @ d1, es.alpha @ d2


def differential_entropy(es: EntropicSpectrum) -> float:
    """``-int p log p = alpha0 + sum_i alpha_i E_p[phi_i]``."""
    return float(es.alpha0 + es.alpha @ es.fitted_moments)


def _check_pair(p, q):
    if p.basis != q.basis:
        raise ValueError(f"basis mismatch: {p.basis} vs {q.basis}")
    if tuple(p.domain) != tuple(q.domain):
        raise ValueError("domain mismatch")


def _padded(p, q):
    m = max(p.m, q.m)
    a = np.zeros(m); a[: p.m] = p.alpha
    b = np.zeros(m); b[: q.m] = q.alpha
    return a, b, m


def _moments_up_to(es, m):
    """Fitted moments of ``es`` extended to order ``m`` by quadrature."""
    if m <= es.m:
        return es.fitted_moments[:m]
    _, w = quadrature_rule(es.quadrature, es.quadrature_order)
    phi = _basis_on_nodes(es.basis, m, es.quadrature_order, es.quadrature)
    p = np.exp(-(es.alpha0 + es.alpha @ phi[: es.m]))
    return phi @ (w * p)


def kl_divergence(p: EntropicSpectrum, q: EntropicSpectrum) -> float:
    """``KL(p || q) = (beta0 - alpha0) + sum_i (beta_i - alpha_i) E_p[phi_i]``.

    Fits of different order are compared by zero-padding the shorter
    coefficient vector.
    """
    _check_pair(p, q)
    a, b, m = _padded(p, q)
    return float((q.alpha0 - p.alpha0) + (b - a) @ _moments_up_to(p, m))


def symmetric_kl(p: EntropicSpectrum, q: EntropicSpectrum) -> float:
    """``(KL(p||q) + KL(q||p)) / 2 = sum_i (alpha_i - beta_i)(mu^q_i - mu^p_i) / 2``."""
    _check_pair(p, q)
    a, b, m = _padded(p, q)
    return float(0.5 * (a - b) @ (_moments_up_to(q, m) - _moments_up_to(p, m)))
