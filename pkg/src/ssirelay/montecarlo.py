"""
Independent Monte Carlo simulator of the dual-hop selection system.

Draws are generated in fixed-size chunks; chunk ``i`` owns the random stream
``RngStream(seed, i)`` and results are merged in chunk order, so the estimate
depends on ``(seed, samples, batch_size)`` but not on the number of workers.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .engine import Protocol, Scenario
from .fading import RngStream, sample_gg, sample_shadow
from .perfkernel import PerfSpec, conditional_perf
from .specfun import DomainError


@dataclass(frozen=True)
class McConfig:
    samples: int = 10_000_000
    seed: int = 20240917
    batch_size: int = 1 << 18
    workers: int = 1

    def __post_init__(self):
        if self.samples < 1000:
            raise DomainError("samples must be >= 1000")
        if self.batch_size < 1 or self.workers < 1:
            raise DomainError("batch_size and workers must be >= 1")


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    samples_used: int


class _Moments:
    """Streaming mean / sum of squared deviations (pairwise merge)."""

    __slots__ = ("n", "mean", "m2")

    def __init__(self, n=0, mean=0.0, m2=0.0):
        self.n, self.mean, self.m2 = n, mean, m2

    @classmethod
    def of(cls, x):
        x = np.asarray(x, dtype=float)
        mu = x.mean()
        return cls(x.size, mu, float(np.sum((x - mu) ** 2)))

    def merge(self, o):
        if o.n == 0:
            return
        n = self.n + o.n
        d = o.mean - self.mean
        self.mean += d * o.n / n
        self.m2 += o.m2 + d * d * self.n * o.n / n
        self.n = n

    def estimate(self):
        var = self.m2 / (self.n - 1) if self.n > 1 else 0.0
        return McEstimate(float(self.mean), math.sqrt(var / self.n), int(self.n))


def _chunks(mc: McConfig):
    n_full, rest = divmod(mc.samples, mc.batch_size)
    sizes = [mc.batch_size] * n_full + ([rest] if rest else [])
    starts = np.cumsum([0] + sizes[:-1])
    return list(zip(range(len(sizes)), starts, sizes))


def _draw(scn: Scenario, chunk_id, start, size, seed, scale=None):
    """End-to-end SNRs and selected indices for one chunk."""
    rng = RngStream(seed, chunk_id).generator
    scale = scn.scale if scale is None else scale
    links = [lk.scaled(scale) for lk in scn.links]
    L = len(links)
    proto = scn.protocol
    if proto in (Protocol.SSI, Protocol.CSI_SIM_ONLY):
        S = np.stack([sample_shadow(lk.hop1, rng, size) for lk in links], axis=1)
        if proto is Protocol.SSI:
            sel = np.argmax(S, axis=1)
            g1 = None
        else:
            G = np.stack([sample_gg(lk.hop1, rng, size) for lk in links], axis=1)
            full = S * G
            sel = np.argmax(full, axis=1)
            g1 = full[np.arange(size), sel]
    elif proto is Protocol.RR:
        sel = (start + np.arange(size)) % L
        g1 = None
        S = None
    else:
        sel = np.full(size, scn.ap_index())
        g1 = None
        S = None
    gamma1 = np.empty(size) if g1 is None else g1
    gamma2 = np.empty(size)
    for l, lk in enumerate(links):
        idx = np.flatnonzero(sel == l)
        k = idx.size
        if k == 0:
            continue
        if g1 is None:
            s1 = S[idx, l] if S is not None else sample_shadow(lk.hop1, rng, k)
            gamma1[idx] = s1 * sample_gg(lk.hop1, rng, k)
        gamma2[idx] = sample_shadow(lk.hop2, rng, k) * sample_gg(lk.hop2, rng, k)
    return gamma1 * gamma2 / (gamma1 + gamma2), sel


def _run(mc: McConfig, work):
    chunks = _chunks(mc)
    if mc.workers == 1:
        parts = [work(*c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=mc.workers) as ex:
            parts = list(ex.map(lambda c: work(*c), chunks))
    return parts


def simulate(scn: Scenario, spec: PerfSpec, mc: McConfig = McConfig()) -> McEstimate:
    """Monte Carlo estimate of E[h(gamma_end)] for the scenario's protocol."""
    def work(cid, start, size):
        g, _ = _draw(scn, cid, start, size, mc.seed)
        return _Moments.of(conditional_perf(spec, g))

    acc = _Moments()
    for part in _run(mc, work):
        acc.merge(part)
    return acc.estimate()


def simulate_sweep(scn: Scenario, specs: Sequence[PerfSpec], snr_dbs: Sequence[float],
                   mc: McConfig = McConfig()):
    """Estimates for every (spec, snr) pair from one shared set of draws.

    The end-to-end SNR is linear in the common SNR factor and selection does
    not depend on it, so draws at 0 dB are rescaled instead of redrawn.

    Returns
    -------
    dict mapping ``(spec_index, snr_index)`` to :class:`McEstimate`.
    """
    scales = [10.0 ** (d / 10.0) for d in snr_dbs]

    def work(cid, start, size):
        g, _ = _draw(scn, cid, start, size, mc.seed, scale=1.0)
        return {(i, j): _Moments.of(conditional_perf(sp_, g * sc))
                for i, sp_ in enumerate(specs) for j, sc in enumerate(scales)}

    acc = {}
    for part in _run(mc, work):
        for key, mom in part.items():
            acc.setdefault(key, _Moments()).merge(mom)
    return {k: v.estimate() for k, v in acc.items()}


def sample_end_snr(scn: Scenario, mc: McConfig = McConfig()) -> np.ndarray:
    """All end-to-end SNR draws at the scenario's SNR, in chunk order.

    Useful when the same draws are needed at many SNR values (for instance
    when solving for the SNR that reaches a target error rate): the end SNR
    scales linearly with the common SNR factor.
    """
    parts = _run(mc, lambda cid, start, size: _draw(scn, cid, start, size, mc.seed)[0])
    return np.concatenate(parts)


def selection_frequencies(scn: Scenario, mc: McConfig = McConfig()):
    """Empirical probability that each relay is selected (SSI or CSI)."""
    if scn.protocol not in (Protocol.SSI, Protocol.CSI_SIM_ONLY):
        raise DomainError("selection frequencies are defined for SSI and CSI selection")
    L = scn.L

    def work(cid, start, size):
        rng = RngStream(mc.seed, cid).generator
        links = [lk.scaled(scn.scale) for lk in scn.links]
        S = np.stack([sample_shadow(lk.hop1, rng, size) for lk in links], axis=1)
        if scn.protocol is Protocol.CSI_SIM_ONLY:
            S = S * np.stack([sample_gg(lk.hop1, rng, size) for lk in links], axis=1)
        return np.bincount(np.argmax(S, axis=1), minlength=L)

    counts = sum(_run(mc, work))
    return [float(c) / mc.samples for c in counts]
