import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from ssirelay import fading as F, selection as S
from ssirelay.fading import EgkParams, RngStream
from ssirelay.presets import table1_links
from ssirelay.specfun import DomainError

LINKS = table1_links()
HOP1 = [lk.hop1 for lk in LINKS]
ENS = S.FirstHopEnsemble.from_params(HOP1)


def _draw_shadow(seed, size, hops=HOP1):
    return np.stack([F.sample_shadow(h, RngStream(seed, i), size) for i, h in enumerate(hops)], axis=1)


def test_ensemble_validation():
    with pytest.raises(DomainError):
        S.FirstHopEnsemble(())
    with pytest.raises(DomainError):
        S.FirstHopEnsemble(((math.inf, 1.0, 1.0),))
    assert ENS.L == 4
    assert ENS.scaled(2.0).shadow_params[0][2] == pytest.approx(2 * HOP1[0].omega)


def test_single_relay_probability():
    assert S.selection_probabilities(S.FirstHopEnsemble(((0.7, 1.3, 2.0),))).mu == (1.0,)


@pytest.mark.parametrize("L", [2, 3, 5])
def test_identical_shadowing_is_uniform(L):
    mu = S.selection_probabilities(S.FirstHopEnsemble(((0.75, 0.75, 0.7),) * L)).mu
    assert np.allclose(mu, 1.0 / L, atol=1e-6)


def test_table1_probabilities_sum_and_range():
    mu = np.array(S.selection_probabilities(ENS).mu)
    assert abs(mu.sum() - 1.0) < 1e-9
    assert np.all((mu >= 0) & (mu <= 1))


def test_table1_probabilities_monte_carlo():
    n = 2_000_000
    counts = np.bincount(np.argmax(_draw_shadow(3, n), axis=1), minlength=4)
    freq = counts / n
    mu = np.array(S.selection_probabilities(ENS).mu)
    sigma = np.sqrt(mu * (1 - mu) / n)
    assert np.all(np.abs(freq - mu) <= 3 * sigma)


@settings(max_examples=15, deadline=None)
@given(st.floats(1e-3, 1e3))
def test_probabilities_invariant_under_common_scaling(c):
    base = np.array(S.selection_probabilities(ENS).mu)
    scaled = np.array(S.selection_probabilities(ENS.scaled(c)).mu)
    assert np.max(np.abs(base - scaled)) < 1e-9


def test_selection_error_on_bad_sum(monkeypatch):
    monkeypatch.setattr(S.integrate, "quad", lambda *a, **k: (0.3, 0.0))
    with pytest.raises(S.SelectionError) as ei:
        S.selection_probabilities(ENS)
    assert ei.value.deviation == pytest.approx(0.2)


# ---------------------------------------------------------------------------
# max-shadowing law
# ---------------------------------------------------------------------------

def test_max_pdf_single_relay():
    ens1 = S.FirstHopEnsemble.from_params(HOP1[2:3])
    s = np.geomspace(0.01, 10, 20)
    assert np.allclose(S.max_shadow_pdf(ens1, s), F.shadow_pdf(HOP1[2], s), rtol=1e-13)


def test_max_pdf_normalization():
    f = lambda y: S.max_shadow_pdf(ENS, math.exp(y)) * math.exp(y)
    tot = integrate.quad(f, -80, 8, epsabs=0, epsrel=1e-11, limit=500, points=[-10, -3, 0])[0]
    assert tot == pytest.approx(1.0, abs=1e-7)


def test_max_pdf_is_cdf_derivative():
    rng = np.random.default_rng(1)
    s = np.exp(rng.uniform(-4, 1.5, 20))
    h = 1e-6 * s
    fd = (S.max_shadow_cdf(ENS, s + h) - S.max_shadow_cdf(ENS, s - h)) / (2 * h)
    assert np.max(np.abs(fd / S.max_shadow_pdf(ENS, s) - 1)) < 1e-5


def test_max_pdf_chi_square():
    n = 1_000_000
    smax = _draw_shadow(17, n).max(axis=1)
    edges = np.quantile(smax, np.linspace(0, 1, 41))
    edges[0], edges[-1] = 0.0, np.inf
    counts, _ = np.histogram(smax, edges)
    probs = np.diff(np.r_[0.0, S.max_shadow_cdf(ENS, edges[1:-1]), 1.0])
    p = stats.chisquare(counts, probs * n).pvalue
    assert p > 0.01


# ---------------------------------------------------------------------------
# Gauss-Chebyshev collapse
# ---------------------------------------------------------------------------

def test_grid_invariants():
    g = S.gcq_grid(ENS, 64)
    assert g.N == 64
    assert np.all(np.diff(g.nodes) > 0) and np.all(g.nodes > 0)
    assert np.all(np.isfinite(g.weights))
    with pytest.raises(DomainError):
        S.gcq_grid(ENS, 4)
    big = S.gcq_grid(ENS, 512)
    assert np.all(np.isfinite(big.nodes)) and np.all(np.diff(big.nodes) > 0)


def test_eta_normalization_and_mean():
    g = S.gcq_grid(ENS, 64)
    eta = S.gcq_eta(ENS, g)
    assert abs(eta.sum() - 1.0) < 1e-4
    mu = np.array(S.selection_probabilities(ENS).mu)
    assert np.allclose(eta.sum(axis=0), mu, atol=1e-4)
    f = lambda y: math.exp(2 * y) * S.max_shadow_pdf(ENS, math.exp(y))
    mean = integrate.quad(f, -80, 8, epsabs=0, epsrel=1e-11, limit=500, points=[-3, 0])[0]
    assert (eta.sum(axis=1) * g.nodes).sum() == pytest.approx(mean, rel=1e-4)


def test_eta_exponential_single_relay_mean():
    ens = S.FirstHopEnsemble(((1.0, 1.0, 1.0),))
    g = S.gcq_grid(ens, 64)
    eta = S.gcq_eta(ens, g)
    assert (eta[:, 0] * g.nodes).sum() == pytest.approx(1.0, abs=1e-4)


def test_conditional_mgf_at_zero_and_validation():
    g = S.gcq_grid(ENS, 64)
    eta = S.gcq_eta(ENS, g)
    for l in range(4):
        assert S.cond_first_hop_recip_mgf(HOP1[l], eta[:, l], g, 0.0) == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(DomainError):
        S.cond_first_hop_recip_mgf(HOP1[0], np.zeros(g.N), g, 1.0)
    with pytest.raises(DomainError):
        S.cond_first_hop_recip_mgf(HOP1[0], eta[:, 0], g, -1.0)


@pytest.mark.parametrize("N, rel", [(64, 1e-5), (256, 1e-10)])
def test_conditional_mgf_single_relay_matches_composite(N, rel):
    # the n = 0.5 relay carries a ~1e-6 node error at N = 64 that vanishes by N = 256
    for h in HOP1:
        ens = S.FirstHopEnsemble.from_params([h])
        g = S.gcq_grid(ens, N)
        eta = S.gcq_eta(ens, g)
        for p in (0.01, 1.0, 30.0):
            assert S.cond_first_hop_recip_mgf(h, eta[:, 0], g, p) == pytest.approx(F.egk_recip_mgf(h, p), rel=rel)


def test_conditional_mgf_monte_carlo():
    n = 10_000_000
    shad = _draw_shadow(21, n)
    sel = np.argmax(shad, axis=1)
    idx = np.flatnonzero(sel == 0)
    gam = shad[idx, 0] * F.sample_gg(HOP1[0], RngStream(22), idx.size)
    x = np.exp(-1.0 / gam)
    se = x.std(ddof=1) / math.sqrt(x.size)
    g = S.gcq_grid(ENS, 64)
    est = S.cond_first_hop_recip_mgf(HOP1[0], S.gcq_eta(ENS, g)[:, 0], g, 1.0)
    assert abs(est - x.mean()) <= 3 * se


def test_conditional_mgf_monotone_and_derivative():
    g = S.gcq_grid(ENS, 64)
    eta = S.gcq_eta(ENS, g)
    p = np.geomspace(1e-3, 1e3, 30)
    for l in range(4):
        v = S.cond_first_hop_recip_mgf(HOP1[l], eta[:, l], g, p)
        assert np.all(np.diff(v) <= 0)
        h = 1e-5 * p
        fd = (S.cond_first_hop_recip_mgf(HOP1[l], eta[:, l], g, p + h)
              - S.cond_first_hop_recip_mgf(HOP1[l], eta[:, l], g, p - h)) / (2 * h)
        d = S.cond_first_hop_recip_mgf_deriv(HOP1[l], eta[:, l], g, p)
        assert np.all(d <= 0)
        assert np.max(np.abs(fd / d - 1)) < 1e-4


@pytest.mark.parametrize("l", range(4))
def test_gcq_cauchy_convergence(l):
    vals = []
    for N in (32, 64, 128):
        g = S.gcq_grid(ENS, N)
        eta = S.gcq_eta(ENS, g)
        vals.append(S.cond_first_hop_recip_mgf(HOP1[l], eta[:, l], g, np.array([0.1, 1.0, 10.0])))
    d1 = np.max(np.abs(vals[1] - vals[0]))
    d2 = np.max(np.abs(vals[2] - vals[1]))
    # at N = 128 the change reaches roundoff, hence the floor
    assert d2 <= 0.5 * d1 or d2 < 1e-12
