"""Dirac-mixture spectra and the kernel-smoothing baseline.

Includes the stochastic Lanczos quadrature spectrum, kernel smoothing of a
Dirac mixture, and the closed-form moment bias that smoothing introduces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .moments import ProbeConfig

__all__ = [
    "DiracSpectrum",
    "SmoothedSpectrum",
    "UnsupportedKernelError",
    "exact_spectrum",
    "lanczos",
    "lanczos_spectrum",
    "smooth",
    "smoothed_moment_bias",
    "kernel_central_moment",
    "dirac_divergence_pathology",
]

KERNELS = ("gaussian", "cauchy")


class UnsupportedKernelError(ValueError):
    """The kernel lacks the finite moments the bias formula needs."""


@dataclass(frozen=True, eq=False)
class DiracSpectrum:
    """Weighted point masses ``sum_i w_i delta(x - x_i)``, atoms ascending."""

    atoms: np.ndarray
    weights: np.ndarray
    source: str = "synthetic"

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float).ravel()
        weights = np.asarray(self.weights, dtype=float).ravel()
        if atoms.shape != weights.shape:
            raise ValueError("atoms and weights differ in length")
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        if abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError(f"weights sum to {weights.sum()!r}, not 1")
        order = np.argsort(atoms, kind="stable")
        atoms, weights = atoms[order], weights[order]
        atoms.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return self.atoms.size

    def moment(self, k):
        return float(self.weights @ self.atoms ** k)

    def to_csv(self, dest=None) -> str:
        lines = ["lambda,weight"] + [f"{a:.8g},{w:.8g}" for a, w in zip(self.atoms, self.weights)]
        text = "\n".join(lines) + "\n"
        if dest is not None:
            with open(dest, "w") as fh:
                fh.write(text)
        return text


def exact_spectrum(op) -> DiracSpectrum:
    """Eigenvalues of the dense operator, each with weight ``1/n``."""
    ev = np.linalg.eigvalsh(op.to_dense())
    if getattr(op, "rescaled", False):
        ev = np.clip(ev, 0.0, 1.0)
    return DiracSpectrum(ev, np.full(ev.size, 1.0 / ev.size), "exact_eig")


def lanczos(op, v, steps):
    """Lanczos tridiagonalisation with full reorthogonalisation.

    Returns ``(alpha, beta)``, the diagonal and off-diagonal of ``T``.  Stops
    early (fewer than ``steps`` rows) when ``beta_k < 1e-12``.
    """
    n = op.n
    if steps > n:
        raise ValueError("cannot take more Lanczos steps than the dimension")
    q = np.asarray(v, dtype=float)
    q = q / np.linalg.norm(q)
    basis = np.empty((steps, n))
    alpha, beta = [], []
    basis[0] = q
    for k in range(steps):
        w = op.matvec(basis[k])
        a = basis[k] @ w
        alpha.append(a)
        # two passes of classical Gram-Schmidt against every previous vector
        for _ in range(2):
            w -= basis[: k + 1].T @ (basis[: k + 1] @ w)
        if k == steps - 1:
            break
        b = np.linalg.norm(w)
        if b < 1e-12:
            break
        beta.append(b)
        basis[k + 1] = w / b
    return np.asarray(alpha), np.asarray(beta)


def _ritz(alpha, beta):
    if alpha.size == 1:
        return alpha.copy(), np.ones(1)
    theta, vecs = sla.eigh_tridiagonal(alpha, beta)
    weights = vecs[0] ** 2
    return theta, weights / weights.sum()


def lanczos_spectrum(op, steps, cfg: ProbeConfig = None) -> DiracSpectrum:
    """Stochastic Lanczos quadrature spectrum.

    Each probe yields Ritz values weighted by the squared first components of
    the eigenvectors of ``T``.  Probes are merged by concatenating their
    atoms with weights divided by the probe count.
    """
    cfg = cfg or ProbeConfig()
    probes = cfg.probes(op.n)
    atoms, weights = [], []
    for j in range(cfg.d):
        a, b = lanczos(op, probes[:, j], steps)
        theta, w = _ritz(a, b)
        atoms.append(theta)
        weights.append(w / cfg.d)
    atoms = np.concatenate(atoms)
    weights = np.concatenate(weights)
    if getattr(op, "rescaled", False):
        atoms = np.clip(atoms, 0.0, 1.0)
    return DiracSpectrum(atoms, weights / weights.sum(), "lanczos")


def _kernel(kind, sigma):
    if kind == "gaussian":
        return lambda u: np.exp(-0.5 * (u / sigma) ** 2) / (sigma * math.sqrt(2.0 * math.pi))
    if kind == "cauchy":
        return lambda u: sigma / (math.pi * (u * u + sigma * sigma))
    raise ValueError(f"unknown kernel {kind!r}; expected one of {KERNELS}")


@dataclass(frozen=True, eq=False)
class SmoothedSpectrum:
    """``sum_i w_i k_sigma(x - x_i)``, defined on the whole real line."""

    base: DiracSpectrum
    kernel: str
    sigma: float

    def __call__(self, x, chunk=4096):
        x = np.asarray(x, dtype=float)
        k = _kernel(self.kernel, self.sigma)
        flat = x.ravel()
        out = np.empty(flat.size)
        for s in range(0, flat.size, chunk):
            part = flat[s: s + chunk]
            out[s: s + chunk] = k(part[:, None] - self.base.atoms[None, :]) @ self.base.weights
        return out.reshape(x.shape)

    def on_grid(self, points=1001, renormalize=True):
        """Density on a uniform grid of ``[0, 1]``, optionally renormalised there."""
        x = np.linspace(0.0, 1.0, points)
        p = self(x)
        if renormalize:
            p = p / np.trapezoid(p, x)
        return x, p

    def to_csv(self, dest=None, points=1001) -> str:
        x, p = self.on_grid(points)
        lines = ["lambda,p"] + [f"{a:.8g},{b:.8g}" for a, b in zip(x, p)]
        text = "\n".join(lines) + "\n"
        if dest is not None:
            with open(dest, "w") as fh:
                fh.write(text)
        return text


def smooth(dirac: DiracSpectrum, kernel="gaussian", sigma=1e-3) -> SmoothedSpectrum:
    if not sigma > 0:
        raise ValueError("bandwidth must be positive")
    _kernel(kernel, sigma)
    return SmoothedSpectrum(dirac, kernel, float(sigma))


def kernel_central_moment(kernel, sigma, order):
    """Central moment of the kernel; odd orders vanish by symmetry.

    Only the Gaussian has finite moments: ``sigma^{2j} (2j - 1)!!``.
    """
    if kernel != "gaussian":
        raise UnsupportedKernelError(f"{kernel} kernel has no finite moments of order >= 2")
    if order % 2:
        return 0.0
    j = order // 2
    double_factorial = math.prod(range(2 * j - 1, 0, -2)) if j else 1
    return sigma ** (2 * j) * double_factorial


def smoothed_moment_bias(dirac: DiracSpectrum, kernel, sigma, m) -> float:
    """Shift of the ``m``-th power moment caused by kernel smoothing.

    Expanding ``(u + x_i)^m`` under the kernel leaves the even terms:

        sum_i w_i sum_{1 <= j <= m/2} C(m, 2j) E_k[u^{2j}] x_i^{m - 2j}
    """
    if not sigma > 0:
        raise ValueError("bandwidth must be positive")
    if kernel not in KERNELS:
        raise ValueError(f"unknown kernel {kernel!r}")
    if kernel != "gaussian":
        raise UnsupportedKernelError("the bias formula needs a kernel with all moments finite")
    total = 0.0
    for j in range(1, m // 2 + 1):
        coeff = math.comb(m, 2 * j) * kernel_central_moment(kernel, sigma, 2 * j)
        # the zeroth moment is 1 by construction; summing weights would add rounding
        total += coeff * (1.0 if m == 2 * j else float(dirac.weights @ dirac.atoms ** (m - 2 * j)))
    return total


def dirac_divergence_pathology(p: DiracSpectrum, q: DiracSpectrum, atol=1e-12) -> float:
    """Discrete KL divergence between two Dirac mixtures.

    Returns ``inf`` when some atom of ``p`` carrying weight has no atom of
    ``q`` within ``atol`` (the mixtures are mutually singular there).
    Coincident atoms are pooled before comparison.
    """
    pa, pw = _pool(p, atol)
    qa, qw = _pool(q, atol)
    idx = np.searchsorted(qa, pa)
    total = 0.0
    for a, w, i in zip(pa, pw, idx):
        if w == 0:
            continue
        match = None
        for c in (i - 1, i):
            if 0 <= c < qa.size and abs(qa[c] - a) <= atol:
                match = c
                break
        if match is None or qw[match] == 0:
            return math.inf
        total += w * math.log(w / qw[match])
    return total


def _pool(d: DiracSpectrum, atol):
    atoms, weights = [], []
    for a, w in zip(d.atoms, d.weights):
        if atoms and a - atoms[-1] <= atol:
            weights[-1] += w
        else:
            atoms.append(a)
            weights.append(w)
    return np.asarray(atoms), np.asarray(weights)
