"""Piecewise-linear quadrature toolkit.

Every expectation in the package integrates the piecewise-linear interpolant
of a grid table *exactly* over the true integration interval, via cumulative
trapezoid integrals plus closed-form partial cells.  This keeps identities
that are exact in the continuum (telescoping, mu = mu_bar - rho, rho-shift)
exact to float rounding on the grid, where a node-sampled trapezoid of a
clipped density would drift at O(h).

Conventions
-----------
* ``x`` is a strictly increasing 1-D node array.
* ``g`` is a table of values at the nodes; ``ghat`` denotes its linear
  interpolant, clamped to the boundary value outside [x[0], x[-1]].
* Cumulative integrals are taken from x[0] and have I[0] = 0.
"""

import numpy as np
from scipy.optimize import brentq

# ===================== basic interpolant integrals =====================


def cumulative_integral(x, g):
    """Cumulative trapezoid integral of ghat at the nodes; I[0] = 0."""
    x = np.asarray(x, dtype=float)
    g = np.asarray(g, dtype=float)
    out = np.zeros_like(g, shape=(g.shape[-1],) if g.ndim == 1 else g.shape)
    if g.ndim == 1:
        out = np.concatenate(([0.0], np.cumsum(0.5 * (g[1:] + g[:-1]) * np.diff(x))))
    else:
        inc = 0.5 * (g[:, 1:] + g[:, :-1]) * np.diff(x)[None, :]
        out = np.concatenate((np.zeros((g.shape[0], 1)), np.cumsum(inc, axis=1)), axis=1)
    return out


def partial_integral(x, g, I, b):
    """integral of ghat from x[0] to b (b scalar or array), closed form.

    Outside the grid the interpolant is clamped to the boundary value, so the
    integral extends linearly.
    """
    x = np.asarray(x, dtype=float)
    g = np.asarray(g, dtype=float)
    b = np.asarray(b, dtype=float)
    scalar = b.ndim == 0
    b = np.atleast_1d(b)
    n = x.size
    j = np.clip(np.searchsorted(x, b, side="right") - 1, 0, n - 2)
    h = x[j + 1] - x[j]
    d = b - x[j]
    slope = (g[j + 1] - g[j]) / h
    out = I[j] + g[j] * d + 0.5 * slope * d * d
    below = b < x[0]
    above = b > x[-1]
    if below.any():
        out[below] = g[0] * (b[below] - x[0])
    if above.any():
        out[above] = I[-1] + g[-1] * (b[above] - x[-1])
    return out[0] if scalar else out


def integral_between(x, g, a, b, I=None):
    """integral of ghat over [a, b] (a <= b element-wise after clipping)."""
    if I is None:
        I = cumulative_integral(x, g)
    return partial_integral(x, g, I, b) - partial_integral(x, g, I, a)


def partial_integral_rows(x, G, I, b):
    """Row-wise partial integral: row i of table G integrated up to b[i]."""
    x = np.asarray(x, dtype=float)
    G = np.asarray(G, dtype=float)
    b = np.asarray(b, dtype=float)
    n = x.size
    j = np.clip(np.searchsorted(x, b, side="right") - 1, 0, n - 2)
    rows = np.arange(G.shape[0])
    h = x[j + 1] - x[j]
    d = b - x[j]
    gj = G[rows, j]
    slope = (G[rows, j + 1] - gj) / h
    out = I[rows, j] + gj * d + 0.5 * slope * d * d
    below = b < x[0]
    above = b > x[-1]
    if below.any():
        out[below] = G[rows[below], 0] * (b[below] - x[0])
    if above.any():
        out[above] = I[rows[above], -1] + G[rows[above], -1] * (b[above] - x[-1])
    return out


# ===================== products of two interpolants =====================


def product_integral(x, d, g):
    """integral of dhat*ghat over the full grid (exact per-cell cubic rule)."""
    return product_cumulative(x, d, g)[-1]


def product_cumulative(x, d, g):
    """Cumulative integral of dhat*ghat at the nodes; exact for the product."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    g = np.asarray(g, dtype=float)
    h = np.diff(x)
    # per-cell integral of (d0 + sd t)(g0 + sg t) over t in [0, h]
    inc = (h / 6.0) * (2.0 * d[:-1] * g[:-1] + d[:-1] * g[1:] + d[1:] * g[:-1] + 2.0 * d[1:] * g[1:])
    return np.concatenate(([0.0], np.cumsum(inc)))


def product_partial(x, d, g, b, P=None):
    """integral of dhat*ghat from x[0] to b; clamped constants outside."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    g = np.asarray(g, dtype=float)
    if P is None:
        P = product_cumulative(x, d, g)
    b = np.asarray(b, dtype=float)
    scalar = b.ndim == 0
    b = np.atleast_1d(b)
    n = x.size
    j = np.clip(np.searchsorted(x, b, side="right") - 1, 0, n - 2)
    h = x[j + 1] - x[j]
    u = b - x[j]
    sd = (d[j + 1] - d[j]) / h
    sg = (g[j + 1] - g[j]) / h
    out = P[j] + d[j] * g[j] * u + 0.5 * (d[j] * sg + g[j] * sd) * u * u + (sd * sg / 3.0) * u ** 3
    below = b < x[0]
    above = b > x[-1]
    if below.any():
        out[below] = d[0] * g[0] * (b[below] - x[0])
    if above.any():
        out[above] = P[-1] + d[-1] * g[-1] * (b[above] - x[-1])
    return out[0] if scalar else out


def product_between(x, d, g, a, b, P=None):
    """integral of dhat*ghat over [a, b]."""
    if P is None:
        P = product_cumulative(x, d, g)
    return product_partial(x, d, g, b, P) - product_partial(x, d, g, a, P)


# ===================== misc small helpers =====================


def restricted_trapz_weights(x, lo_cut=-np.inf, hi_cut=np.inf):
    """Node weights w with sum(w * q) = integral of qhat over [lo_cut, hi_cut].

    Exact for the piecewise-linear interpolant; cut points may fall inside
    cells (partial-cell closed form), and the window is clipped to the grid.
    """
    x = np.asarray(x, dtype=float)
    w = np.zeros_like(x)
    lo = max(lo_cut, x[0])
    hi = min(hi_cut, x[-1])
    if hi <= lo:
        return w
    for j in range(x.size - 1):
        a = max(lo, x[j])
        b = min(hi, x[j + 1])
        if b <= a:
            continue
        h = x[j + 1] - x[j]
        ua = (a - x[j]) / h
        ub = (b - x[j]) / h
        half = 0.5 * (b - a)
        w[j] += half * ((1 - ua) + (1 - ub))
        w[j + 1] += half * (ua + ub)
    return w


def trapz_weights(x):
    x = np.asarray(x, dtype=float)
    w = np.zeros_like(x)
    h = np.diff(x)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


def interp(x, g, q):
    """Linear interpolation with boundary clamping (np.interp semantics)."""
    return np.interp(q, x, g)


def monotone_root(x, g, target, tol=1e-9):
    """Root of ghat(theta) = target for a (weakly) monotone table.

    Returns None when no sign change is bracketed on [x[0], x[-1]].
    Exact node hits are returned directly; otherwise Brent to ``tol``.
    """
    x = np.asarray(x, dtype=float)
    g = np.asarray(g, dtype=float)
    f = g - target
    hits = np.flatnonzero(np.abs(f) <= tol)
    if hits.size:
        return float(x[hits[0]])
    sign = np.sign(f)
    idx = np.flatnonzero(sign[:-1] * sign[1:] < 0)
    if idx.size == 0:
        return None
    j = idx[0]
    fn = lambda q: np.interp(q, x, g) - target
    return float(brentq(fn, x[j], x[j + 1], xtol=tol))
