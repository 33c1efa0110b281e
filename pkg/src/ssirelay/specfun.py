"""
Special functions used by the analytic engine.

Most entries are thin, domain-checked wrappers around ``scipy.special``.
The one function scipy does not provide is the extended incomplete gamma
function

    Gamma(alpha, x, b, beta) = int_x^inf r^(alpha-1) exp(-r - b r^(-beta)) dr,

which is the building block of every generalized-gamma reciprocal MGF.  For
``x = 0`` it is evaluated with a trapezoid rule in ``t = log r`` centred on
the mode of the log-integrand (the integrand is doubly-exponentially decaying
on both sides, so the rule converges geometrically).  ``beta = 1`` goes through
the Bessel-K closed form.  :class:`ExtGammaTable` caches a piecewise Chebyshev
fit of ``log Gamma(alpha, 0, b, beta)`` in ``log b`` for the hot loops.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize, special as sp

EULER_GAMMA = float(np.euler_gamma)


class DomainError(ValueError):
    """Argument outside the function's mathematical domain."""


class DivergenceError(DomainError):
    """The defining integral does not converge for these arguments."""


@dataclass(frozen=True)
class QuadTolerance:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-14
    max_subdivisions: int = 200

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise DomainError("rel_tol must be > 0")
        if not self.abs_tol >= 0:
            raise DomainError("abs_tol must be >= 0")
        if self.max_subdivisions < 1:
            raise DomainError("max_subdivisions must be >= 1")


DEFAULT_TOL = QuadTolerance()


def _check(cond, msg):
    if not np.all(cond):
        raise DomainError(msg)


def _out(v):
    return float(v) if np.ndim(v) == 0 else v


def gamma_fn(x):
    """Complete gamma function for x > 0."""
    x = np.asarray(x, dtype=float)
    _check(x > 0, "gamma_fn requires x > 0")
    return _out(sp.gamma(x))


def upper_inc_gamma(b, x):
    """Non-normalized upper incomplete gamma Gamma(b, x)."""
    b = np.asarray(b, dtype=float)
    x = np.asarray(x, dtype=float)
    _check(b > 0, "upper_inc_gamma requires b > 0")
    _check(x >= 0, "upper_inc_gamma requires x >= 0")
    return _out(sp.gammaincc(b, x) * sp.gamma(b))


def lower_inc_gamma_regularized(n, x):
    """Regularized lower incomplete gamma P(n, x), rising from 0 to 1."""
    n = np.asarray(n, dtype=float)
    x = np.asarray(x, dtype=float)
    _check(n > 0, "lower_inc_gamma_regularized requires n > 0")
    _check(x >= 0, "lower_inc_gamma_regularized requires x >= 0")
    return _out(sp.gammainc(n, x))


def bessel_j0(x):
    x = np.asarray(x, dtype=float)
    _check(x >= 0, "bessel_j0 requires x >= 0")
    return _out(sp.j0(x))


def bessel_j1(x):
    x = np.asarray(x, dtype=float)
    _check(x >= 0, "bessel_j1 requires x >= 0")
    return _out(sp.j1(x))


def bessel_k(nu, x):
    """Modified Bessel function of the second kind, real order."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise OverflowError("K_nu(x) is unbounded for x <= 0")
    return _out(sp.kv(nu, x))


def sine_integral(x):
    x = np.asarray(x, dtype=float)
    _check(x >= 0, "sine_integral requires x >= 0")
    return _out(sp.sici(x)[0])


def exp_integral_ei(x):
    """Ei(x) for x < 0, i.e. -E1(-x)."""
    x = np.asarray(x, dtype=float)
    _check(x < 0, "exp_integral_ei is only provided for x < 0")
    return _out(sp.expi(x))


# ---------------------------------------------------------------------------
# extended incomplete gamma
# ---------------------------------------------------------------------------

def _log_eig_bessel(alpha, lb):
    """log Gamma(alpha, 0, b, 1) = log(2 b^(alpha/2) K_alpha(2 sqrt b)) from lb = log b."""
    lb = np.asarray(lb, dtype=float)
    z = 2.0 * np.exp(0.5 * lb)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        k = sp.kve(alpha, z)
        out = math.log(2.0) + 0.5 * alpha * lb + np.log(k) - z
    # kve gives up for huge z; the two-term asymptotic is exact to 1e-12 there
    big = z > 1e6
    if np.any(big):
        zb = z[big]
        out[big] = (math.log(2.0) + 0.5 * alpha * lb[big]
                    + 0.5 * np.log(np.pi / (2.0 * zb)) - zb
                    + np.log1p((4.0 * alpha * alpha - 1.0) / (8.0 * zb)))
    # kve under/overflows for tiny z or very large order; fall back to the
    # general evaluator there
    bad = ~np.isfinite(out) & ~big
    if np.any(bad):
        out[bad] = _log_eig_trapezoid(alpha, lb[bad], 1.0)
    return out


def _log_eig_trapezoid(alpha, lb, beta, eps=1e-17, chunk=16):
    """log Gamma(alpha, 0, b, beta) from lb = log b by the mode-centred trapezoid rule.

    Works on whole arrays; the outward march is vectorized over all points
    still contributing.
    """
    alpha, lb, beta = (np.ascontiguousarray(v, dtype=float).ravel().copy()
                       for v in np.broadcast_arrays(alpha, lb, beta))
    # log-integrand in t: g(t) = alpha t - e^t - b e^(-beta t), strictly concave
    # starting point: the balance of whichever two terms of g' dominate
    with np.errstate(divide="ignore"):
        la = np.log(np.abs(alpha) + 1e-300)
        t = (lb + np.log(beta)) / (1.0 + beta)
        t = np.where(alpha > 0, np.maximum(la, t), t)
        t = np.where(alpha < 0, np.minimum((lb + np.log(beta) - la) / beta, t), t)
    act = np.arange(t.size)
    for _ in range(400):
        ta = t[act]
        et = np.exp(ta)
        eb = np.exp(lb[act] - beta[act] * ta)
        g1 = alpha[act] - et + beta[act] * eb
        g2 = -et - beta[act] ** 2 * eb
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            step = np.where(g2 < 0, g1 / g2, -3.0 * np.sign(g1))
        step = np.clip(np.nan_to_num(step, nan=0.0), -3.0, 3.0)
        t[act] = ta - step
        act = act[np.abs(step) > 1e-12 * np.maximum(1.0, np.abs(ta))]
        if act.size == 0:
            break
    E1 = np.exp(t)
    E2 = np.exp(lb - beta * t)
    gmax = alpha * t - E1 - E2
    with np.errstate(divide="ignore"):
        sig = 1.0 / np.sqrt(E1 + beta * beta * E2)
    h = np.minimum(0.25 / np.maximum(beta, 1.0), 0.5 * sig)
    total = np.ones_like(t)
    # Far into underflow the mode cannot be resolved on the t grid; the value
    # is exp(-1e4) or smaller there, so Laplace's O(1/|g''|) error is harmless.
    far = gmax < -1.0e4
    k0 = np.arange(1, chunk + 1)
    for d in (1.0, -1.0):
        act = np.flatnonzero(~far)
        k = 0
        while act.size:
            dl = d * h[act, None] * (k + k0)
            # g(t*+dl) - g(t*), written to avoid cancellation
            # (when E1 or E2 underflows at the mode, use the plain exponential)
            ta, lba, ba = t[act, None], lb[act, None], beta[act, None]
            with np.errstate(over="ignore", invalid="ignore"):
                d1 = np.where(E1[act, None] > 1e-280, E1[act, None] * np.expm1(dl),
                              np.exp(ta + dl))
                d2 = np.where(E2[act, None] > 1e-280, E2[act, None] * np.expm1(-ba * dl),
                              np.exp(lba - ba * (ta + dl)))
            g = alpha[act, None] * dl - d1 - d2
            e = np.exp(g)
            total[act] += e.sum(axis=1)
            act = act[e[:, -1] > eps * total[act]]
            k += chunk
    out = gmax + np.log(total * h)
    out[far] = gmax[far] + np.log(np.sqrt(2.0 * np.pi) * sig[far])
    return out


def log_ext_inc_gamma(alpha, b, beta):
    """Vectorized ``log Gamma(alpha, 0, b, beta)`` over ``b`` for scalar alpha, beta.

    ``b = 0`` returns ``log Gamma(alpha)`` (alpha > 0) and raises otherwise.
    """
    alpha = float(alpha)
    beta = float(beta)
    b = np.asarray(b, dtype=float)
    shape = b.shape
    b = b.ravel()
    _check(b >= 0, "ext_inc_gamma requires b >= 0")
    _check(beta > 0, "ext_inc_gamma requires beta > 0")
    out = np.empty(b.shape)
    zero = b == 0
    if np.any(zero):
        if alpha <= 0:
            raise DivergenceError("Gamma(alpha, 0, 0, beta) diverges for alpha <= 0")
        out[zero] = sp.gammaln(alpha)
    pos = ~zero
    if np.any(pos):
        out[pos] = log_ext_inc_gamma_logb(alpha, np.log(b[pos]), beta)
    return out.reshape(shape)


def log_ext_inc_gamma_logb(alpha, lb, beta):
    """Same as :func:`log_ext_inc_gamma` but parameterized by ``lb = log b``.

    Lets callers reach arguments far below the smallest positive double.
    """
    alpha = float(alpha)
    beta = float(beta)
    lb = np.asarray(lb, dtype=float)
    if beta == 1.0:
        return _log_eig_bessel(alpha, lb.ravel()).reshape(lb.shape)
    return _log_eig_trapezoid(alpha, lb.ravel(), beta).reshape(lb.shape)


def _eig_tail(alpha, x, b, beta, tol):
    # x > 0: integrate in t = log r from log x upward, scaled by the peak
    t0 = math.log(x)

    def g(t):
        return alpha * t - math.exp(t) - (b * math.exp(-beta * t) if b > 0 else 0.0)

    # peak of g over [t0, inf)
    tm = t0
    for _ in range(200):
        et = math.exp(tm)
        eb = b * math.exp(-beta * tm) if b > 0 else 0.0
        g1 = alpha - et + beta * eb
        if tm == t0 and g1 <= 0:
            break
        g2 = -et - beta * beta * eb
        step = max(-3.0, min(3.0, g1 / g2))
        tn = max(t0, tm - step)
        if abs(tn - tm) < 1e-13 * max(1.0, abs(tm)):
            tm = tn
            break
        tm = tn
    gm = g(tm)
    t1 = tm + 1.0
    while g(t1) > gm - 60.0:
        t1 = tm + 2.0 * (t1 - tm)

    def f(t):
        return math.exp(g(t) - gm)

    pts = [tm] if tm > t0 else None
    val, err = integrate.quad(f, t0, t1, points=pts, epsabs=0.0,
                              epsrel=tol.rel_tol, limit=tol.max_subdivisions)
    return math.log(val) + gm


def ext_inc_gamma(alpha, x, b, beta, tol: QuadTolerance = DEFAULT_TOL):
    """Extended incomplete gamma function Gamma(alpha, x, b, beta).

    Parameters
    ----------
    alpha : float
        Any real order when ``b > 0``.
    x : float
        Lower limit, ``x >= 0``.
    b : float
        Coefficient of the essential singularity, ``b >= 0``.
    beta : float
        Exponent of the singular term, ``beta > 0``.

    Raises
    ------
    DivergenceError
        For ``b = 0, x = 0, alpha <= 0``.
    """
    x = float(x)
    b = float(b)
    alpha = float(alpha)
    beta = float(beta)
    if x < 0 or b < 0 or not beta > 0:
        raise DomainError("ext_inc_gamma requires x >= 0, b >= 0, beta > 0")
    if x == 0:
        return float(np.exp(log_ext_inc_gamma(alpha, b, beta)))
    if b == 0 and alpha > 0:
        return upper_inc_gamma(alpha, x)
    return math.exp(_eig_tail(alpha, x, b, beta, tol))


class ExtGammaTable:
    """Piecewise Chebyshev fit of ``y -> log Gamma(alpha, 0, e^y, beta)``.

    Panels of width ``width`` cover ``[y_lo, y_hi]``; ``y_hi`` is the first
    panel edge beyond which the function is below ``exp(-800)`` (it is
    decreasing in b).  Each panel is checked against a direct evaluation at
    off-node points on construction; the fit must be good to ``fit_tol``
    in the log (relative once the log exceeds one in magnitude).
    """

    def __init__(self, alpha, beta, deg=16, width=2.0, y_lo=-800.0,
                 fit_tol=1e-12):
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.deg = deg
        self.y_lo = y_lo
        self.width = width
        f = lambda y: float(log_ext_inc_gamma_logb(self.alpha, y, self.beta)) + 800.0
        # the function is decreasing in b: bracket and bisect the underflow edge
        top = 8.0
        while f(top) > 0:
            top *= 2.0
        y_edge = optimize.brentq(f, y_lo, top, xtol=1e-3)
        npan = int(math.ceil((y_edge - y_lo) / width))
        self.y_hi = y_lo + npan * width
        xc = np.cos(np.pi * (np.arange(deg + 1) + 0.5) / (deg + 1))
        a = y_lo + width * np.arange(npan)
        ys = a[:, None] + 0.5 * width * (xc[None, :] + 1.0)
        vals = log_ext_inc_gamma_logb(self.alpha, ys, self.beta)
        # Chebyshev coefficients from values at Chebyshev-Gauss nodes
        T = np.cos(np.outer(np.arange(deg + 1), np.arccos(xc)))
        coef = vals @ T.T * (2.0 / (deg + 1))
        coef[:, 0] *= 0.5
        self.coef = coef
        # verify at panel quarter points
        probe = (a[:, None] + width * np.array([0.13, 0.37, 0.61, 0.89])).ravel()
        ref = log_ext_inc_gamma_logb(self.alpha, probe, self.beta)
        got = self._eval(probe)
        # log-values far below zero carry roundoff proportional to their size
        worst = float(np.max(np.abs(got - ref) / np.maximum(1.0, np.abs(ref))))
        if worst > fit_tol:
            raise RuntimeError(f"table fit error {worst:.2e} exceeds {fit_tol:.1e}")
        self.max_fit_error = float(worst)

    def _eval(self, y):
        i = np.clip(((y - self.y_lo) // self.width).astype(np.intp), 0, self.coef.shape[0] - 1)
        x = 2.0 * (y - self.y_lo - i * self.width) / self.width - 1.0
        c = self.coef[i]
        b1 = np.zeros_like(x)
        b2 = np.zeros_like(x)
        for k in range(self.deg, 0, -1):
            b1, b2 = 2.0 * x * b1 - b2 + c[:, k], b1
        return x * b1 - b2 + c[:, 0]

    def log_value(self, y):
        """log Gamma(alpha, 0, e^y, beta); -inf beyond the underflow edge."""
        y = np.asarray(y, dtype=float)
        shape = y.shape
        y = y.ravel()
        out = np.empty(y.shape)
        inside = (y >= self.y_lo) & (y < self.y_hi)
        out[inside] = self._eval(y[inside])
        out[y >= self.y_hi] = -np.inf
        low = y < self.y_lo
        if np.any(low):
            out[low] = log_ext_inc_gamma_logb(self.alpha, y[low], self.beta)
        return out.reshape(shape)


@lru_cache(maxsize=256)
def ext_gamma_table(alpha: float, beta: float) -> ExtGammaTable:
    """Shared, lazily built table for one (alpha, beta) pair."""
    return ExtGammaTable(alpha, beta)
