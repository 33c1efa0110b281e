"""
Analytic average performance of partial relay selection over EGK hops.

For a harmonic-mean end-to-end SNR ``gamma = g1 g2 / (g1 + g2)`` we have
``1/gamma = 1/g1 + 1/g2``, so with the reciprocal MGFs ``M1, M2``

    F(u) = E[exp(-u/gamma)] = sum_l mu_l M1_l(u) M2_l(u)

and every average of the form ``E[h(gamma)]`` becomes

    int_0^inf Z(u) f(u) du,   f(u) = -F'(u) = -sum_l mu_l (M1_l' M2_l + M1_l M2_l'),

with the metric-specific kernel ``Z`` from :mod:`perfkernel`.  ``f`` is
non-negative and integrates to one, which is the health check reported as
``normalization_residual``.  Under SSI selection the conditioned first-hop
``mu_l M1_l`` is a Gauss-Chebyshev sum over the max-shadowing law.

The outer integral is done in ``tau = log u`` with a vectorized adaptive
Gauss-Kronrod rule.  The truncation points come from ``F`` itself: below
``u_lo`` the omitted mass is ``F(0) - F(u_lo)`` and above ``u_hi`` it is
``F(u_hi)``, both pushed below roundoff and added back as tail corrections.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import special as sp

from ._quad import QuadratureError, gk21_adaptive
from .fading import EgkParams
from .perfkernel import BEP_KINDS, PerfKind, PerfSpec, z_kernel
from .selection import FirstHopEnsemble, gcq_eta, gcq_grid
from .specfun import (DEFAULT_TOL, DivergenceError, DomainError, QuadTolerance,
                      _log_eig_bessel, ext_gamma_table)


class Protocol(enum.Enum):
    SSI = "SSI"
    RR = "RR"
    AP = "AP"
    CSI_SIM_ONLY = "CSI_SIM_ONLY"


class UStrategy(enum.Enum):
    DECAYING = "decaying"
    OSCILLATORY = "oscillatory"


@dataclass(frozen=True)
class RelayLink:
    hop1: EgkParams
    hop2: EgkParams

    def scaled(self, factor):
        return RelayLink(self.hop1.scaled(factor), self.hop2.scaled(factor))


@dataclass(frozen=True)
class Scenario:
    links: tuple
    protocol: Protocol = Protocol.SSI
    snr_scale_db: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(self.links))
        if len(self.links) < 1:
            raise DomainError("scenario needs at least one relay")
        if not isinstance(self.protocol, Protocol):
            object.__setattr__(self, "protocol", Protocol(self.protocol))

    @property
    def L(self):
        return len(self.links)

    @property
    def scale(self):
        return 10.0 ** (self.snr_scale_db / 10.0)

    def with_(self, **kw):
        d = dict(links=self.links, protocol=self.protocol, snr_scale_db=self.snr_scale_db)
        d.update(kw)
        return Scenario(**d)

    def ap_index(self):
        om = [lk.hop1.omega for lk in self.links]
        return int(np.argmax(om))  # first maximum, i.e. lowest index on ties


@dataclass(frozen=True)
class EngineConfig:
    gcq_N: int = 64
    u_tol: QuadTolerance = DEFAULT_TOL
    u_strategy: UStrategy = UStrategy.DECAYING
    max_u: float = 1e300

    def __post_init__(self):
        if self.gcq_N < 8:
            raise DomainError("gcq_N must be >= 8")
        if not self.max_u > 0:
            raise DomainError("max_u must be > 0")


@dataclass
class PerfResult:
    analytic_value: float
    error_estimate: float
    normalization_residual: float
    diagnostics: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# assembly of the integrand
# ---------------------------------------------------------------------------

class _Side:
    """sum_j w_j M_G(u / s_j) and its u-derivative for one generalized-gamma hop."""

    def __init__(self, params: EgkParams, log_nodes, weights, direct=False):
        self.m, self.xi = params.m, params.xi
        self.lphi = math.log(params.phi)
        self.lgm = math.lgamma(params.m)
        self.ls = np.asarray(log_nodes, dtype=float)
        self.w = np.asarray(weights, dtype=float)
        keep = self.w > 0
        self.ls, self.w = self.ls[keep], self.w[keep]
        self.direct = direct
        if direct:
            if params.xi != 1.0:
                raise DomainError("Bessel-K fast path needs xi = 1")
        else:
            self.tm = ext_gamma_table(self.m, 1.0 / self.xi)
            self.td = ext_gamma_table(self.m - 1.0 / self.xi, 1.0 / self.xi)

    def eval(self, lu):
        y = self.lphi + lu[:, None] - self.ls[None, :]
        if self.direct:
            lm = _log_eig_bessel(self.m, y.ravel()).reshape(y.shape)
            ld = _log_eig_bessel(self.m - 1.0, y.ravel()).reshape(y.shape)
        else:
            lm = self.tm.log_value(y)
            ld = self.td.log_value(y)
        M = np.exp(lm - self.lgm) @ self.w
        D = -(np.exp(ld + self.lphi - self.lgm - self.ls) @ self.w)
        return M, D

    @property
    def mass(self):
        return float(self.w.sum())


def _hop_side(params: EgkParams, N, direct, weight=1.0, ens_eta=None):
    """Side object for a hop, shadowing averaged by GCQ when n is finite."""
    if not params.shadowed:
        return _Side(params, [math.log(params.omega)], [weight], direct)
    if ens_eta is None:
        ens = FirstHopEnsemble.from_params([params])
        grid = gcq_grid(ens, N)
        ens_eta = (grid, gcq_eta(ens, grid)[:, 0])
    grid, eta = ens_eta
    return _Side(params, np.log(grid.nodes), weight * eta, direct)


class _Assembly:
    def __init__(self, links, protocol, N, direct):
        self.terms = []
        L = len(links)
        if protocol is Protocol.CSI_SIM_ONLY:
            raise DomainError("CSI-based selection has no analytic form; use montecarlo.simulate")
        if protocol is Protocol.SSI:
            if L == 1:
                lk = links[0]
                self.terms.append((_hop_side(lk.hop1, N, direct), _hop_side(lk.hop2, N, direct)))
            else:
                if not all(lk.hop1.shadowed for lk in links):
                    raise DomainError("SSI selection needs finite hop-1 shadowing figures "
                                      "(deterministic shadowing reduces to AP)")
                ens = FirstHopEnsemble.from_params([lk.hop1 for lk in links])
                grid = gcq_grid(ens, N)
                eta = gcq_eta(ens, grid)
                for l, lk in enumerate(links):
                    if eta[:, l].sum() <= 0:
                        continue
                    s1 = _hop_side(lk.hop1, N, direct, ens_eta=(grid, eta[:, l]))
                    self.terms.append((s1, _hop_side(lk.hop2, N, direct)))
        elif protocol is Protocol.RR:
            for lk in links:
                self.terms.append((_hop_side(lk.hop1, N, direct, weight=1.0 / L),
                                   _hop_side(lk.hop2, N, direct)))
        elif protocol is Protocol.AP:
            lk = links[int(np.argmax([x.hop1.omega for x in links]))]
            self.terms.append((_hop_side(lk.hop1, N, direct), _hop_side(lk.hop2, N, direct)))
        self.F0 = sum(a.mass * b.mass for a, b in self.terms)
        om = [math.log(x.hop1.omega) for x in links] + [math.log(x.hop2.omega) for x in links]
        self.tau0 = float(np.mean(om))
        self._norm = None

    def density(self, lu):
        """f(u) = -F'(u) at u = exp(lu)."""
        lu = np.atleast_1d(np.asarray(lu, dtype=float))
        tot = np.zeros(lu.shape)
        for s1, s2 in self.terms:
            M1, D1 = s1.eval(lu)
            M2, D2 = s2.eval(lu)
            tot -= D1 * M2 + M1 * D2
        return tot

    def F(self, lu):
        lu = np.atleast_1d(np.asarray(lu, dtype=float))
        tot = np.zeros(lu.shape)
        for s1, s2 in self.terms:
            tot += s1.eval(lu)[0] * s2.eval(lu)[0]
        return tot


@lru_cache(maxsize=64)
def _assembly(links, protocol, N, direct=False):
    return _Assembly(links, protocol, N, direct)


def _get_assembly(scn: Scenario, cfg: EngineConfig, direct=False):
    links = tuple(lk.scaled(scn.scale) for lk in scn.links)
    return _assembly(links, scn.protocol, cfg.gcq_N, direct)


def integrand_ssi(scn: Scenario, cfg: EngineConfig, u):
    """Density-like outer integrand f(u) for the scenario's protocol."""
    u = np.asarray(u, dtype=float)
    if np.any(~(u > 0)):
        raise DomainError("u must be > 0")
    asm = _get_assembly(scn, cfg)
    v = asm.density(np.log(u).ravel()).reshape(u.shape)
    return float(v) if v.ndim == 0 else v


# ---------------------------------------------------------------------------
# outer integral
# ---------------------------------------------------------------------------

def _kernel_fn(spec):
    if spec is None:
        return lambda u: np.ones_like(u)
    return lambda u: z_kernel(spec, u)


def _bounds(asm, kern, cfg, growth_k=0):
    """Truncation points in tau with the tails below roundoff."""
    eps_lo = 1e-15
    eps_hi = 1e-3 * max(cfg.u_tol.abs_tol, 1e-18)
    t = asm.tau0
    lo = t - 4.0
    while asm.F0 - asm.F(lo)[0] > eps_lo * max(1.0, asm.F0):
        lo -= 4.0
        if lo < asm.tau0 - 1500.0:
            break
    hi = t + 4.0
    tau_max = math.log(cfg.max_u)
    while True:
        Fh = asm.F(hi)[0]
        zh = abs(float(kern(np.array([math.exp(hi)]))[0]))
        if Fh * max(1.0, zh) <= eps_hi or hi >= tau_max:
            break
        hi = min(hi + 2.0, tau_max)
    return lo, hi


def _integrate(asm, kern, cfg, lo, hi):
    def f(tau):
        u = np.exp(tau)
        return kern(u) * asm.density(tau) * u

    edges = np.linspace(lo, hi, max(2, int(math.ceil((hi - lo) / 2.0))) + 1)
    tol = cfg.u_tol
    return gk21_adaptive(f, edges, tol.rel_tol, tol.abs_tol)


def _decaying(asm, kern, cfg):
    lo, hi = _bounds(asm, kern, cfg)
    val, err, nev = _integrate(asm, kern, cfg, lo, hi)
    u_lo, u_hi = math.exp(lo), math.exp(hi)
    zl = float(kern(np.array([u_lo]))[0])
    zh = float(kern(np.array([u_hi]))[0])
    tail_lo = zl * (asm.F0 - asm.F(lo)[0])
    tail_hi = zh * asm.F(hi)[0]
    val += tail_lo + tail_hi
    err += 1e-3 * (abs(tail_lo) + abs(tail_hi))
    return val, err, dict(tau_lo=lo, tau_hi=hi, nevals=nev,
                          tail_lo=tail_lo, tail_hi=tail_hi)


def _normalization(asm, cfg):
    if asm._norm is None:
        v, e, _ = _decaying(asm, _kernel_fn(None), cfg)
        asm._norm = (v - 1.0, e)
    return asm._norm


def _result(asm, cfg, val, err, diag, spec=None):
    res, res_err = _normalization(asm, cfg)
    # GCQ truncation acts on every functional about as it does on the constant
    gcq = abs(asm.F0 - 1.0) * max(abs(val), 1.0 if spec is None or spec.kind in BEP_KINDS else abs(val))
    diag = dict(diag, gcq_mass_error=asm.F0 - 1.0, normalization_error=res_err)
    return PerfResult(float(val), float(err + gcq), float(res), diag)


def aup(scn: Scenario, spec: PerfSpec, cfg: EngineConfig = EngineConfig()) -> PerfResult:
    """Average performance E[h(gamma_end)] for BEP, capacity or MGF kinds."""
    if scn.protocol is Protocol.CSI_SIM_ONLY:
        raise DomainError("CSI-based selection is simulation-only; use montecarlo.simulate")
    if spec.kind is PerfKind.MOMENT:
        raise DomainError("use engine.moments for MOMENT kinds")
    asm = _get_assembly(scn, cfg)
    val, err, diag = _decaying(asm, _kernel_fn(spec), cfg)
    return _result(asm, cfg, val, err, diag, spec)


def normalization(scn: Scenario, cfg: EngineConfig = EngineConfig()) -> PerfResult:
    """int f(u) du, which should be one; the residual is the health check."""
    asm = _get_assembly(scn, cfg)
    res, err = _normalization(asm, cfg)
    return PerfResult(1.0 + res, err, res, dict(gcq_mass_error=asm.F0 - 1.0))


def aup_gk_fastpath(scn: Scenario, spec: PerfSpec, cfg: EngineConfig = EngineConfig()) -> PerfResult:
    """Same quantity as :func:`aup` for generalized-K hops (xi = zeta = 1).

    The reciprocal MGFs are evaluated directly from the Bessel-K closed form
    ``M(p) = 2 (m p)^(m/2) K_m(2 sqrt(m p)) / Gamma(m)`` instead of the
    tabulated extended incomplete gamma.
    """
    for lk in scn.links:
        for h in (lk.hop1, lk.hop2):
            if h.xi != 1.0 or (h.shadowed and h.zeta != 1.0):
                raise DomainError("GK fast path needs xi = zeta = 1 on every hop")
    if scn.protocol is Protocol.CSI_SIM_ONLY:
        raise DomainError("CSI-based selection is simulation-only")
    asm = _get_assembly(scn, cfg, direct=True)
    val, err, diag = _decaying(asm, _kernel_fn(spec), cfg)
    return _result(asm, cfg, val, err, dict(diag, path="bessel-k"), spec)


# ---------------------------------------------------------------------------
# MGF with the oscillatory strategy
# ---------------------------------------------------------------------------

_J0_ZEROS = sp.jn_zeros(0, 2000)


def _j0_zero(k):
    """k-th positive zero of J0 (1-based), McMahon expansion past the table."""
    k = np.asarray(k)
    out = np.empty(k.shape)
    tab = k <= _J0_ZEROS.size
    out[tab] = _J0_ZEROS[k[tab] - 1]
    b = (k[~tab] - 0.25) * np.pi
    out[~tab] = b + 1 / (8 * b) - 124 / (3 * (8 * b) ** 3)
    return out


def end_mgf(scn: Scenario, p: float, cfg: EngineConfig = EngineConfig()) -> PerfResult:
    """E[exp(-p gamma_end)] by integrating between zeros of J0(2 sqrt(p u)).

    The first lobe ``[0, u_1]`` is done in log u; later lobes form an
    alternating series whose partial sums are smoothed by repeated averaging.
    """
    if not p > 0:
        raise DomainError("p must be > 0")
    if scn.protocol is Protocol.CSI_SIM_ONLY:
        raise DomainError("CSI-based selection is simulation-only")
    spec = PerfSpec.mgf(p)
    kern = _kernel_fn(spec)
    asm = _get_assembly(scn, cfg)
    tol = cfg.u_tol
    lo, hi = _bounds(asm, kern, cfg)
    u_hi = math.exp(hi)
    u1 = float(_j0_zero(np.array([1]))[0]) ** 2 / (4.0 * p)
    if math.log(u1) >= hi:
        val, err, diag = _decaying(asm, kern, cfg)
        return _result(asm, cfg, val, err, dict(diag, lobes=0), spec)
    first, err, nev = _integrate(asm, kern, cfg, lo, math.log(u1))
    tail_lo = float(kern(np.array([math.exp(lo)]))[0]) * (asm.F0 - asm.F(lo)[0])
    first += tail_lo

    def f(u):
        return kern(u) * asm.density(np.log(u))

    partial = [first]
    k = 1
    batch = 64
    while True:
        zs = _j0_zero(np.arange(k, k + batch + 1)) ** 2 / (4.0 * p)
        _, e, n_, lobes = gk21_adaptive(f, zs, tol.rel_tol, tol.abs_tol * 1e-2, groups=True)
        err += e
        nev += n_
        for v in lobes:
            partial.append(partial[-1] + v)
        k += batch
        last = np.abs(lobes[-4:])
        if zs[-1] >= u_hi and np.all(last <= max(tol.abs_tol, tol.rel_tol * abs(partial[-1]))):
            break
        if k > 200_000:
            raise QuadratureError("alternating series did not settle", partial[-1], np.inf)
    # repeated averaging of the last partial sums (Euler-type smoothing)
    s = np.array(partial[-8:])
    while s.size > 1:
        s = 0.5 * (s[1:] + s[:-1])
    val = float(s[0])
    tail_hi = abs(asm.F(math.log(zs[-1]))[0])
    err += abs(val - partial[-1]) + tail_hi
    diag = dict(tau_lo=lo, lobes=len(partial) - 1, nevals=nev, strategy="oscillatory")
    return _result(asm, cfg, val, err, diag, spec)


# ---------------------------------------------------------------------------
# moments and amount of fading
# ---------------------------------------------------------------------------

def moments(scn: Scenario, k: int, cfg: EngineConfig = EngineConfig()) -> PerfResult:
    """E[gamma_end^k] = int u^k/k! f(u) du."""
    if k < 0 or int(k) != k:
        raise DomainError("k must be a non-negative integer")
    if scn.protocol is Protocol.CSI_SIM_ONLY:
        raise DomainError("CSI-based selection is simulation-only")
    k = int(k)
    spec = PerfSpec.moment(k)
    kern = _kernel_fn(spec)
    asm = _get_assembly(scn, cfg)
    lo, hi = _bounds(asm, kern, cfg)
    # divergence diagnosis: u^(k+1) f(u) must be falling at the upper edge
    if hi >= math.log(cfg.max_u) - 1e-9:
        taus = np.array([hi - 2.0, hi])
        g = np.exp((k + 1) * taus) * asm.density(taus)
        if g[1] >= g[0] * 0.5:
            raise DivergenceError(f"moment of order {k} appears to diverge: "
                                  f"u^(k+1) f(u) not decaying at u = {math.exp(hi):.3g}")
    val, err, diag = _decaying(asm, kern, cfg)
    return _result(asm, cfg, val, err, diag, spec)


def amount_of_fading(scn: Scenario, k: int = 2, cfg: EngineConfig = EngineConfig()) -> PerfResult:
    """AF^(k) = E[gamma^k] / E[gamma]^k - 1."""
    if k < 1 or int(k) != k:
        raise DomainError("k must be an integer >= 1")
    m1 = moments(scn, 1, cfg)
    mk = moments(scn, k, cfg)
    r = mk.analytic_value / m1.analytic_value ** k
    err = r * (mk.error_estimate / mk.analytic_value + k * m1.error_estimate / m1.analytic_value)
    return PerfResult(r - 1.0, err, mk.normalization_residual,
                      dict(moment_1=m1.analytic_value, moment_k=mk.analytic_value))


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def scenario_from_rows(hop1_rows: Sequence, hop2_rows: Sequence, protocol=Protocol.SSI,
                       snr_scale_db=0.0) -> Scenario:
    """Build a scenario from ``(m, xi, n, zeta, omega)`` tuples."""
    links = tuple(RelayLink(EgkParams(*a), EgkParams(*b)) for a, b in zip(hop1_rows, hop2_rows))
    return Scenario(links, protocol, snr_scale_db)
