"""
Extended generalized-K (EGK) composite fading.

The instantaneous SNR of one hop is ``gamma = S * G`` where

* ``G`` is unit-mean generalized-gamma fast fading, ``G = W**(1/xi) / phi``
  with ``W ~ Gamma(m)`` and ``phi = Gamma(m + 1/xi) / Gamma(m)``;
* ``S`` is generalized-gamma shadowing with mean ``omega``,
  ``S = (omega / phihat) * V**(1/zeta)`` with ``V ~ Gamma(n)``.

``n = INFINITE_SHADOWING_FIGURE`` switches shadowing off (``S == omega``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate, special as sp

from .specfun import (DEFAULT_TOL, DivergenceError, DomainError, QuadTolerance,
                      ext_gamma_table, log_ext_inc_gamma,
                      log_ext_inc_gamma_logb)

INFINITE_SHADOWING_FIGURE = math.inf


@dataclass(frozen=True)
class EgkParams:
    """Five-parameter EGK description of one hop, ``(m, xi, n, zeta, omega)``."""

    m: float
    xi: float
    n: float
    zeta: float
    omega: float

    def __post_init__(self):
        if not self.m >= 0.5:
            raise DomainError(f"m must be >= 0.5, got {self.m}")
        if not self.xi > 0:
            raise DomainError(f"xi must be > 0, got {self.xi}")
        if not self.n >= 0.5:
            raise DomainError(f"n must be >= 0.5 or infinite, got {self.n}")
        if not self.zeta > 0:
            raise DomainError(f"zeta must be > 0, got {self.zeta}")
        if not (self.omega > 0 and math.isfinite(self.omega)):
            raise DomainError(f"omega must be positive and finite, got {self.omega}")

    @property
    def shadowed(self) -> bool:
        return math.isfinite(self.n)

    @cached_property
    def phi(self) -> float:
        return math.exp(math.lgamma(self.m + 1.0 / self.xi) - math.lgamma(self.m))

    @cached_property
    def phihat(self) -> float:
        if not self.shadowed:
            return 1.0
        return math.exp(math.lgamma(self.n + 1.0 / self.zeta) - math.lgamma(self.n))

    def scaled(self, factor: float) -> "EgkParams":
        """Same shapes, average SNR multiplied by ``factor``."""
        return EgkParams(self.m, self.xi, self.n, self.zeta, self.omega * factor)


@dataclass(frozen=True)
class RngStream:
    """Seed-derived independent random stream.

    ``(seed, stream_id)`` fully determines the sequence.
    """

    seed: int
    stream_id: int = 0
    generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ss = np.random.SeedSequence([int(self.seed) & 0xFFFFFFFFFFFFFFFF, int(self.stream_id)])
        object.__setattr__(self, "generator", np.random.Generator(np.random.PCG64(ss)))


def _pos(x, name):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError(f"{name} must be > 0")
    return x


def _ret(v):
    return float(v) if np.ndim(v) == 0 else v


# ---------------------------------------------------------------------------
# densities
# ---------------------------------------------------------------------------

def gg_pdf(params: EgkParams, g):
    """Unit-mean generalized-gamma fast-fading density."""
    g = _pos(g, "g")
    m, xi, phi = params.m, params.xi, params.phi
    x = phi * g
    logp = math.log(xi * phi) - math.lgamma(m) + (m * xi - 1.0) * np.log(x) - x ** xi
    return _ret(np.exp(logp))


def _require_finite_n(params):
    if not params.shadowed:
        raise DomainError("shadowing is a point mass at omega when n is infinite")


def shadow_pdf(params: EgkParams, s):
    """Generalized-gamma shadowing density with mean omega."""
    _require_finite_n(params)
    s = _pos(s, "s")
    n, z = params.n, params.zeta
    c = params.phihat / params.omega
    x = c * s
    logp = math.log(z * c) - math.lgamma(n) + (n * z - 1.0) * np.log(x) - x ** z
    return _ret(np.exp(logp))


def shadow_cdf(params: EgkParams, s):
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise DomainError("s must be >= 0")
    if not params.shadowed:
        return _ret(np.where(s >= params.omega, 1.0, 0.0))
    return _ret(sp.gammainc(params.n, (s * params.phihat / params.omega) ** params.zeta))


def egk_snr_pdf(params: EgkParams, gamma):
    """Composite EGK density of ``S*G``.

    The shadowing average collapses to one extended incomplete gamma:
    with ``c = phi*phihat/omega``,

        p(g) = xi c^(m xi) g^(m xi - 1) / (Gamma(m) Gamma(n))
               * Gamma(n - m xi/zeta, 0, (c g)^xi, xi/zeta).
    """
    _require_finite_n(params)
    gamma = _pos(gamma, "gamma")
    m, xi, n, z = params.m, params.xi, params.n, params.zeta
    c = params.phi * params.phihat / params.omega
    lg = np.log(c * gamma)
    le = log_ext_inc_gamma_logb(n - m * xi / z, xi * lg, xi / z)
    logp = (math.log(xi * c) + (m * xi - 1.0) * lg
            - math.lgamma(m) - math.lgamma(n) + le)
    return _ret(np.exp(logp))


# ---------------------------------------------------------------------------
# reciprocal MGFs
# ---------------------------------------------------------------------------

def _log_gg_recip(m, xi, phi, log_p):
    """log M_{1/G}(p) from log p, table-backed; log_p = -inf gives 0."""
    t = ext_gamma_table(m, 1.0 / xi)
    return t.log_value(math.log(phi) + log_p) - math.lgamma(m)


def _log_gg_recip_deriv(m, xi, phi, log_p):
    """log(-dM_{1/G}/dp) from log p."""
    t = ext_gamma_table(m - 1.0 / xi, 1.0 / xi)
    return math.log(phi) - math.lgamma(m) + t.log_value(math.log(phi) + log_p)


def gg_recip_mgf(params: EgkParams, p):
    """E[exp(-p/G)] = Gamma(m, 0, phi p, 1/xi) / Gamma(m)."""
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise DomainError("p must be >= 0")
    m, xi, phi = params.m, params.xi, params.phi
    out = np.ones(p.shape)
    pos = p > 0
    out[pos] = np.exp(log_ext_inc_gamma(m, phi * p[pos], 1.0 / xi) - math.lgamma(m))
    return _ret(out)


def gg_recip_mgf_deriv(params: EgkParams, p):
    """d/dp E[exp(-p/G)] = -(phi/Gamma(m)) Gamma(m - 1/xi, 0, phi p, 1/xi)."""
    p = np.asarray(p, dtype=float)
    m, xi, phi = params.m, params.xi, params.phi
    if np.any(p == 0):
        if m * xi <= 1.0:
            raise DivergenceError("derivative at p=0 diverges for m*xi <= 1 (E[1/G] infinite)")
        # -E[1/G]
        val = -phi * math.exp(math.lgamma(m - 1.0 / xi) - math.lgamma(m))
        if p.ndim == 0:
            return val
    if np.any(p < 0):
        raise DomainError("p must be >= 0")
    out = np.empty(p.shape)
    pos = p > 0
    out[pos] = -phi * np.exp(log_ext_inc_gamma(m - 1.0 / xi, phi * p[pos], 1.0 / xi) - math.lgamma(m))
    if np.any(~pos):
        out[~pos] = val
    return _ret(out)


def egk_recip_mgf(params: EgkParams, p, tol: QuadTolerance = DEFAULT_TOL):
    """E[exp(-p/(S G))] by integrating M_{1/G}(p/s) against the shadowing law.

    The shadowing average is done in ``v = log V`` (``V ~ Gamma(n)``), where
    the density ``exp(n v - e^v)/Gamma(n)`` is smooth and log-concave.
    """
    p = float(p)
    if p < 0:
        raise DomainError("p must be >= 0")
    if p == 0:
        return 1.0
    if not params.shadowed:
        return float(gg_recip_mgf(params, p / params.omega))
    m, xi, n, z = params.m, params.xi, params.n, params.zeta
    lscale = math.log(params.omega / params.phihat)
    lp = math.log(p)
    lgn = math.lgamma(n)

    def f(v):
        v = np.atleast_1d(v)
        ls = lscale + v / z
        w = np.exp(n * v - np.exp(v) - lgn)
        return w * np.exp(_log_gg_recip(m, xi, params.phi, lp - ls))

    # log V has mode log n and sd ~ trigamma(n)^(1/2); the left tail decays like e^(n v)
    c = math.log(n)
    sd = math.sqrt(sp.polygamma(1, n))
    lo = c - 40.0 / n - 12.0 * sd
    hi = c + 6.0 + 12.0 * sd
    val, err = integrate.quad(lambda v: float(f(v)[0]), lo, hi, points=[c],
                              epsabs=tol.abs_tol, epsrel=tol.rel_tol,
                              limit=tol.max_subdivisions)
    if not np.isfinite(val) or err > max(tol.abs_tol, 1e3 * tol.rel_tol * abs(val)):
        raise RuntimeError(f"egk_recip_mgf quadrature failed: value {val}, error {err}")
    return min(1.0, val)


# ---------------------------------------------------------------------------
# samplers (numpy's gamma generator is Marsaglia-Tsang squeeze/rejection)
# ---------------------------------------------------------------------------

def _gen(rng):
    return rng.generator if isinstance(rng, RngStream) else rng


def sample_gg(params: EgkParams, rng, size=None):
    w = _gen(rng).standard_gamma(params.m, size=size)
    return w ** (1.0 / params.xi) / params.phi


def sample_shadow(params: EgkParams, rng, size=None):
    if not params.shadowed:
        return params.omega if size is None else np.full(size, params.omega)
    v = _gen(rng).standard_gamma(params.n, size=size)
    return (params.omega / params.phihat) * v ** (1.0 / params.zeta)


def sample_egk_snr(params: EgkParams, rng, size=None):
    s = sample_shadow(params, rng, size)
    return s * sample_gg(params, rng, size)
