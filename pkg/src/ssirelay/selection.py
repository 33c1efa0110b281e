"""
Shadowing-side-information (SSI) relay selection statistics.

The relay with the largest first-hop shadowing power ``S_l`` is selected.
``P(select l, S_max in ds) = p_l(s) prod_{k != l} P_k(s) ds`` drives both the
selection probabilities and the Gauss-Chebyshev collapse of the conditioned
first-hop reciprocal MGF.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate, optimize, special as sp

from .fading import EgkParams, _log_gg_recip, _log_gg_recip_deriv
from .specfun import DEFAULT_TOL, DomainError, QuadTolerance


class SelectionError(RuntimeError):
    """Selection probabilities failed their sum-to-one check."""

    def __init__(self, msg, deviation):
        super().__init__(msg)
        self.deviation = deviation


@dataclass(frozen=True)
class FirstHopEnsemble:
    """Shadowing triples ``(n, zeta, omega)`` of the L first hops."""

    shadow_params: tuple

    def __post_init__(self):
        sp_ = tuple(tuple(float(v) for v in t) for t in self.shadow_params)
        object.__setattr__(self, "shadow_params", sp_)
        if len(sp_) < 1:
            raise DomainError("ensemble needs at least one relay")
        for n, z, om in sp_:
            if not (math.isfinite(n) and n >= 0.5):
                raise DomainError("SSI selection needs finite shadowing figures n >= 0.5")
            if not (z > 0 and om > 0):
                raise DomainError("zeta and omega must be positive")

    @classmethod
    def from_params(cls, hop1: Sequence[EgkParams]) -> "FirstHopEnsemble":
        return cls(tuple((p.n, p.zeta, p.omega) for p in hop1))

    @property
    def L(self) -> int:
        return len(self.shadow_params)

    def scaled(self, factor):
        return FirstHopEnsemble(tuple((n, z, om * factor) for n, z, om in self.shadow_params))


@dataclass(frozen=True)
class GcqGrid:
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def N(self) -> int:
        """Number of retained nodes (the requested N minus any out-of-range ones)."""
        return self.nodes.size


@dataclass(frozen=True)
class SelectionProbabilities:
    mu: tuple

    def __getitem__(self, i):
        return self.mu[i]

    def __len__(self):
        return len(self.mu)


def _phihat(n, z):
    return math.exp(math.lgamma(n + 1.0 / z) - math.lgamma(n))


def _pdf(s, n, z, om):
    c = _phihat(n, z) / om
    x = c * s
    with np.errstate(divide="ignore", over="ignore"):
        return np.exp(math.log(z * c) - math.lgamma(n) + (n * z - 1.0) * np.log(x) - x ** z)


def _cdf(s, n, z, om):
    return sp.gammainc(n, (s * _phihat(n, z) / om) ** z)


def _component(s, ens, l):
    """l-th summand of the max-shadowing density."""
    v = _pdf(s, *ens.shadow_params[l])
    for k, t in enumerate(ens.shadow_params):
        if k != l:
            v = v * _cdf(s, *t)
    return v


def max_shadow_cdf(ens: FirstHopEnsemble, s):
    s = np.asarray(s, dtype=float)
    v = np.ones(s.shape)
    for t in ens.shadow_params:
        v = v * _cdf(s, *t)
    return float(v) if v.ndim == 0 else v


def max_shadow_pdf(ens: FirstHopEnsemble, s):
    """Density of ``max_l S_l``."""
    s = np.asarray(s, dtype=float)
    if np.any(~(s > 0)):
        raise DomainError("s must be > 0")
    v = sum(_component(s, ens, l) for l in range(ens.L))
    return float(v) if np.ndim(v) == 0 else v


def _log_range(t, eps=1e-18):
    """log s interval outside which one shadowing law has < eps mass."""
    n, z, om = t
    lo = sp.gammaincinv(n, eps)
    hi = sp.gammainccinv(n, eps)
    base = math.log(om / _phihat(n, z))
    lo = base + math.log(lo) / z if lo > 0 else base - 745.0 / (n * z)
    return lo, base + math.log(hi) / z


def selection_probabilities(ens: FirstHopEnsemble, tol: QuadTolerance = DEFAULT_TOL) -> SelectionProbabilities:
    """mu_l = int p_l(s) prod_{k!=l} P_k(s) ds, by adaptive quadrature in log s."""
    L = ens.L
    if L == 1:
        return SelectionProbabilities((1.0,))
    mu = []
    for l in range(L):
        lo, hi = _log_range(ens.shadow_params[l])
        med = 0.5 * (lo + hi)

        def f(y):
            s = math.exp(y)
            return float(_component(np.array([s]), ens, l)[0]) * s

        pts = np.linspace(lo, hi, 9)[1:-1]
        val, _ = integrate.quad(f, lo, hi, points=pts, epsabs=tol.abs_tol,
                                epsrel=tol.rel_tol, limit=tol.max_subdivisions)
        mu.append(val)
    mu = np.array(mu)
    dev = mu.sum() - 1.0
    if abs(dev) > 1e-6:
        raise SelectionError(f"selection probabilities sum to 1{dev:+.3e}", dev)
    mu = np.clip(mu / mu.sum(), 0.0, 1.0)
    return SelectionProbabilities(tuple(float(v) for v in mu))


def max_shadow_median(ens: FirstHopEnsemble) -> float:
    los, his = zip(*(_log_range(t) for t in ens.shadow_params))
    f = lambda y: max_shadow_cdf(ens, math.exp(y)) - 0.5
    return math.exp(optimize.brentq(f, min(los), max(his), xtol=1e-12))


def gcq_grid(ens: FirstHopEnsemble, N: int = 64) -> GcqGrid:
    """Gauss-Chebyshev nodes mapped to (0, inf) in log-space.

    ``s = exp(c + lam * x / sqrt(1 - x^2))`` with ``c`` the log-median of the
    max-shadowing law and ``lam`` the widest per-relay spread of ``log S``.
    The algebraic tails of the map match the (at worst exponential in
    ``log s``) decay of the shadowing densities.
    """
    if N < 8:
        raise DomainError("GCQ needs N >= 8")
    i = np.arange(1, N + 1)
    x = np.cos((2 * i - 1) * np.pi / (2 * N))[::-1]
    c = math.log(max_shadow_median(ens))
    lam = max(math.sqrt(sp.polygamma(1, n)) / z for n, z, _ in ens.shadow_params)
    one_m = (1.0 - x) * (1.0 + x)
    ls = c + lam * x / np.sqrt(one_m)
    # for large N the outermost nodes leave the double range; the shadowing
    # mass out there is far below roundoff, so they are dropped
    keep = np.abs(ls) < 700.0
    s = np.exp(ls[keep])
    w = (np.pi / N) * lam * s / one_m[keep]
    return GcqGrid(s, w)


def gcq_eta(ens: FirstHopEnsemble, grid: GcqGrid) -> np.ndarray:
    """N x L matrix of raw weights; column l sums to (approximately) mu_l."""
    with np.errstate(under="ignore"):
        return np.stack([grid.weights * _component(grid.nodes, ens, l)
                         for l in range(ens.L)], axis=1)


def cond_first_hop_recip_mgf(relay_params: EgkParams, eta_col, grid: GcqGrid, p):
    """E[exp(-p / (S_max G_l)) | relay l selected].

    The raw column of ``eta`` carries the selection probability; it is divided
    out here so that the value at ``p = 0`` is exactly one.
    """
    eta_col = np.asarray(eta_col, dtype=float)
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise DomainError("p must be >= 0")
    mu = eta_col.sum()
    if not mu > 0:
        raise DomainError("relay is never selected (mu = 0)")
    with np.errstate(divide="ignore"):
        lp = np.log(p)[..., None] - np.log(grid.nodes)
    m = np.exp(_log_gg_recip(relay_params.m, relay_params.xi, relay_params.phi, lp))
    v = (m * eta_col).sum(axis=-1) / mu
    return float(v) if v.ndim == 0 else v


def cond_first_hop_recip_mgf_deriv(relay_params: EgkParams, eta_col, grid: GcqGrid, p):
    """p-derivative of :func:`cond_first_hop_recip_mgf` (non-positive)."""
    eta_col = np.asarray(eta_col, dtype=float)
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0):
        raise DomainError("derivative needs p > 0")
    mu = eta_col.sum()
    lp = np.log(p)[..., None] - np.log(grid.nodes)
    d = np.exp(_log_gg_recip_deriv(relay_params.m, relay_params.xi, relay_params.phi, lp))
    v = -(d * eta_col / grid.nodes).sum(axis=-1) / mu
    return float(v) if v.ndim == 0 else v
