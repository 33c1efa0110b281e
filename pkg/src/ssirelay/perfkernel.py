"""
Performance kernels.

Every supported metric is an average ``E[h(gamma_end)]`` that can be written
as ``int_0^inf Z(u) f(u) du`` with ``f`` the density-like engine integrand.
``Z`` is available in closed form for

=================  =====================================
kind               Z(u)
=================  =====================================
BEP_COHERENT       1/2 - Si(2 sqrt(a u)) / pi
BEP_NONCOHERENT    J0(2 sqrt(a u)) / 2
BEP_WOJNAR         dispatches on b (1/2 coherent, 1 non-coherent)
CAPACITY           W/ln2 * (ln u + C + E1(u))
MGF                J0(2 sqrt(p u))
MOMENT             u^k / k!
=================  =====================================
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import special as sp

from .specfun import EULER_GAMMA, DomainError


class PerfKind(enum.Enum):
    BEP_COHERENT = "bep_coherent"
    BEP_NONCOHERENT = "bep_noncoherent"
    BEP_WOJNAR = "bep_wojnar"
    CAPACITY = "capacity"
    MGF = "mgf"
    MOMENT = "moment"


BEP_KINDS = (PerfKind.BEP_COHERENT, PerfKind.BEP_NONCOHERENT, PerfKind.BEP_WOJNAR)

# modulation -> (a, b): conditional BEP = Gamma(b, a gamma) / (2 Gamma(b))
MODULATIONS = {
    "bpsk": (1.0, 0.5),
    "bfsk": (0.5, 0.5),
    "ncfsk": (0.5, 1.0),
    "bdpsk": (1.0, 1.0),
}


@dataclass(frozen=True)
class PerfSpec:
    kind: PerfKind
    a: float = 1.0
    b: float = 1.0
    c: float = 1.0
    n_param: int = 1
    bandwidth_W: float = 1.0
    moment_k: int = 0

    def __post_init__(self):
        k = self.kind
        if k in BEP_KINDS:
            if self.a not in (0.5, 1.0) or self.b not in (0.5, 1.0):
                raise DomainError("BEP kinds need a, b in {1/2, 1}")
            if self.n_param != 1 or self.c != 1.0:
                raise DomainError("BEP kinds force n=1, c=1")
            if k is PerfKind.BEP_COHERENT and self.b != 0.5:
                raise DomainError("coherent BEP has b = 1/2")
            if k is PerfKind.BEP_NONCOHERENT and self.b != 1.0:
                raise DomainError("non-coherent BEP has b = 1")
        elif k is PerfKind.CAPACITY:
            if not self.bandwidth_W > 0:
                raise DomainError("bandwidth must be > 0")
            if (self.a, self.b, self.n_param) != (1.0, 1.0, 2) or \
                    not math.isclose(self.c, self.bandwidth_W / math.log(2.0)):
                raise DomainError("capacity forces a=1, b=1, n=2, c=W/ln2")
        elif k is PerfKind.MGF:
            if not self.a > 0 or (self.b, self.c, self.n_param) != (1.0, 2.0, 1):
                raise DomainError("MGF forces a=p>0, b=1, c=2, n=1")
        elif k is PerfKind.MOMENT:
            if int(self.moment_k) != self.moment_k or self.moment_k < 0:
                raise DomainError("moment order must be a non-negative integer")

    # convenience constructors -------------------------------------------------
    @classmethod
    def bep(cls, modulation: str) -> "PerfSpec":
        try:
            a, b = MODULATIONS[modulation.lower()]
        except KeyError:
            raise DomainError(f"unknown modulation {modulation!r}") from None
        kind = PerfKind.BEP_COHERENT if b == 0.5 else PerfKind.BEP_NONCOHERENT
        return cls(kind, a=a, b=b)

    @classmethod
    def wojnar(cls, a: float, b: float) -> "PerfSpec":
        return cls(PerfKind.BEP_WOJNAR, a=a, b=b)

    @classmethod
    def capacity(cls, bandwidth_W: float = 1.0) -> "PerfSpec":
        return cls(PerfKind.CAPACITY, a=1.0, b=1.0, c=bandwidth_W / math.log(2.0),
                   n_param=2, bandwidth_W=bandwidth_W)

    @classmethod
    def mgf(cls, p: float) -> "PerfSpec":
        return cls(PerfKind.MGF, a=p, b=1.0, c=2.0, n_param=1)

    @classmethod
    def moment(cls, k: int) -> "PerfSpec":
        return cls(PerfKind.MOMENT, moment_k=int(k))

    @property
    def label(self) -> str:
        if self.kind in BEP_KINDS:
            for name, ab in MODULATIONS.items():
                if ab == (self.a, self.b):
                    return name
        if self.kind is PerfKind.CAPACITY:
            return "capacity"
        if self.kind is PerfKind.MGF:
            return f"mgf(p={self.a:g})"
        return f"moment(k={self.moment_k})"


def _capacity_core(u):
    """ln u + C + E1(u), i.e. ln u - Ei(-u) + C, with a series near 0."""
    u = np.asarray(u, dtype=float)
    out = np.empty(u.shape)
    small = u < 1e-3
    us = u[small]
    # sum_{k>=1} (-1)^(k+1) u^k / (k k!), five terms is plenty below 1e-3
    acc = np.zeros(us.shape)
    term = np.ones(us.shape)
    for k in range(1, 6):
        term = term * us / k
        acc += (-1) ** (k + 1) * term / k
    out[small] = acc
    ub = u[~small]
    out[~small] = np.log(ub) + EULER_GAMMA + sp.exp1(ub)
    return out


def z_kernel(spec: PerfSpec, u):
    """Auxiliary kernel Z(u) of the requested metric."""
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise DomainError("u must be >= 0")
    k = spec.kind
    if k is PerfKind.BEP_WOJNAR:
        k = PerfKind.BEP_COHERENT if spec.b == 0.5 else PerfKind.BEP_NONCOHERENT
    if k is PerfKind.BEP_COHERENT:
        v = 0.5 - sp.sici(2.0 * np.sqrt(spec.a * u))[0] / np.pi
    elif k is PerfKind.BEP_NONCOHERENT:
        v = 0.5 * sp.j0(2.0 * np.sqrt(spec.a * u))
    elif k is PerfKind.CAPACITY:
        v = spec.c * _capacity_core(u)
    elif k is PerfKind.MGF:
        v = sp.j0(2.0 * np.sqrt(spec.a * u))
    elif k is PerfKind.MOMENT:
        v = z_mgf_derivative_at_zero(spec.moment_k, u)
    else:
        raise DomainError(f"unsupported kernel {spec.kind}")
    return float(v) if np.ndim(v) == 0 else v


def z_mgf_derivative_at_zero(k: int, u):
    """(-1)^k d^k/dp^k J0(2 sqrt(p u)) at p = 0, which is u^k / k!."""
    if k < 0 or int(k) != k:
        raise DomainError("k must be a non-negative integer")
    u = np.asarray(u, dtype=float)
    v = u ** k / math.factorial(int(k))
    return float(v) if v.ndim == 0 else v


def conditional_perf(spec: PerfSpec, gamma):
    """Per-sample performance h(gamma) averaged by the simulator."""
    g = np.asarray(gamma, dtype=float)
    k = spec.kind
    if k in BEP_KINDS:
        v = 0.5 * sp.gammaincc(spec.b, spec.a * g)
    elif k is PerfKind.CAPACITY:
        v = spec.bandwidth_W * np.log1p(g) / math.log(2.0)
    elif k is PerfKind.MGF:
        v = np.exp(-spec.a * g)
    else:
        v = g ** spec.moment_k
    return float(v) if np.ndim(v) == 0 else v
