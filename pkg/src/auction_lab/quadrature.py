"""Batched adaptive composite Gauss-Legendre quadrature.

Many independent 1-D integrals are refined together: every panel that has
not converged is bisected, and all surviving panels are evaluated in a single
vectorised call per round.  Nested (iterated) integration relies on this, the
inner integrals for all outer nodes being one batch.
"""

from __future__ import annotations

import numpy as np

NODES = 64
_x, _w = np.polynomial.legendre.leggauss(NODES)
# reference rule on [0, 1]
GL_NODES = 0.5 * (_x + 1.0)
GL_WEIGHTS = 0.5 * _w

MAX_ROUNDS = 64
MIN_WIDTH = 1e-13


def _panel_sums(f, owner, a, b):
    width = b - a
    t = a[:, None] + width[:, None] * GL_NODES[None, :]
    vals = np.asarray(f(owner, t), dtype=float)
    return width * (vals @ GL_WEIGHTS)


def integrate_batch(f, owner, a, b, n_owners, tol=1e-11):
    """Integrate ``f`` over a set of panels, summing results per owner.

    ``f(owner, t)`` receives integer owner ids of shape ``(P,)`` and nodes of
    shape ``(P, NODES)`` and returns values of the same shape.  Panels
    ``[a[p], b[p]]`` belong to ``owner[p]``.  A panel is accepted once its
    one-panel and two-half-panel estimates differ by at most ``tol`` times its
    width, so each owner's total error is roughly ``tol`` per unit length.
    """
    owner = np.asarray(owner, dtype=np.intp)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.zeros(n_owners)
    if owner.size == 0:
        return out
    whole = _panel_sums(f, owner, a, b)
    for _ in range(MAX_ROUNDS):
        mid = 0.5 * (a + b)
        both = _panel_sums(
            f,
            np.concatenate([owner, owner]),
            np.concatenate([a, mid]),
            np.concatenate([mid, b]),
        )
        left, right = both[: a.size], both[a.size :]
        halves = left + right
        width = b - a
        done = (np.abs(halves - whole) <= tol * width) | (width <= MIN_WIDTH)
        np.add.at(out, owner[done], halves[done])
        keep = ~done
        if not keep.any():
            return out
        owner = np.concatenate([owner[keep], owner[keep]])
        a, b, whole = (
            np.concatenate([a[keep], mid[keep]]),
            np.concatenate([mid[keep], b[keep]]),
            np.concatenate([left[keep], right[keep]]),
        )
    # depth exhausted: take the finest available estimate
    np.add.at(out, owner, whole)
    return out


def panels_from_breaks(lo, hi, breaks):
    """Split ``[lo_k, hi_k]`` at the per-owner ``breaks`` (NaN = absent).

    Returns ``(owner, a, b)`` arrays of non-degenerate panels.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    k = lo.size
    if breaks is None:
        breaks = np.empty((k, 0))
    breaks = np.asarray(breaks, dtype=float).reshape(k, -1)
    inside = (breaks > lo[:, None]) & (breaks < hi[:, None])
    cuts = np.where(inside, breaks, np.nan)
    edges = np.sort(np.concatenate([lo[:, None], cuts, hi[:, None]], axis=1), axis=1)
    # NaNs sort last; replace them by hi so they yield empty panels
    edges = np.where(np.isnan(edges), hi[:, None], edges)
    a = edges[:, :-1]
    b = edges[:, 1:]
    keep = b > a
    owner = np.broadcast_to(np.arange(k)[:, None], a.shape)[keep]
    return owner, a[keep], b[keep]


def integrate(f, lo, hi, breaks=(), tol=1e-11):
    """Scalar convenience wrapper: integrate a vectorised ``f(x)`` on ``[lo, hi]``."""
    owner, a, b = panels_from_breaks([lo], [hi], np.array([list(breaks)], dtype=float))
    return float(integrate_batch(lambda _o, t: f(t), owner, a, b, 1, tol=tol)[0])
