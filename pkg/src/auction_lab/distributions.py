"""Generation laws on [0, 1]: the private types reported by the players.

Expectations use closed forms when the family allows it.  Everything else
goes through :func:`expect_batch`, which splits each law into integration
segments (with a power substitution that removes the endpoint singularity of
Beta densities with a parameter below one) and refines them adaptively.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import ClassVar

import numpy as np
from scipy import special

from .errors import InvalidDistribution, InvalidProbability, ObjectiveDomainError
from .objectives import Identity, Monomial, ObjectiveFn
from .quadrature import integrate_batch, panels_from_breaks

EXPECT_TOL = 1e-11


@dataclass(frozen=True)
class _Segment:
    """One integration piece: x = x_of_t(t) on t in [t0, t1] with weight w(t)."""

    kind: str  # "linear", "left", "right"
    t0: float
    t1: float
    density: float = 0.0  # linear with constant density (0 => use pdf)
    alpha: float = 1.0
    beta: float = 1.0
    log_norm: float = 0.0

    def x_of_t(self, t):
        if self.kind == "left":
            return t ** (1.0 / self.alpha)
        if self.kind == "right":
            return 1.0 - t ** (1.0 / self.beta)
        return t

    def t_of_x(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "left":
            return np.where(x > 0, np.abs(x) ** self.alpha, 0.0)
        if self.kind == "right":
            return np.where(x < 1, np.abs(1.0 - x) ** self.beta, 0.0)
        return x

    def weight(self, t, x):
        if self.kind == "linear" and self.density:
            return np.full_like(x, self.density)
        # nodes may round onto an endpoint; log(0) there is harmless once exponentiated
        with np.errstate(divide="ignore", invalid="ignore"):
            log_w = -self.log_norm
            if self.kind != "right" and self.beta != 1.0:
                log_w = log_w + (self.beta - 1.0) * np.log1p(-x)
            if self.kind != "left" and self.alpha != 1.0:
                log_w = log_w + (self.alpha - 1.0) * np.log(x)
            w = np.exp(log_w) * np.ones_like(x)
        if self.kind == "left":
            return w / self.alpha
        if self.kind == "right":
            return w / self.beta
        return w


class GenDistribution:
    """Base class for the parametric families.  Values are immutable and hashable."""

    family: ClassVar[str]

    def cdf(self, x):
        raise NotImplementedError

    def _quantile(self, u):
        """Generalized inverse for u in (0, 1]."""
        raise NotImplementedError

    def inverse_cdf(self, u):
        u_arr = np.asarray(u, dtype=float)
        if np.any(~np.isfinite(u_arr)) or np.any((u_arr < 0.0) | (u_arr > 1.0)):
            raise InvalidProbability(f"probability {u!r} outside [0, 1]")
        out = np.where(u_arr > 0.0, self._quantile(np.where(u_arr > 0.0, u_arr, 1.0)), self.support[0])
        return float(out) if out.ndim == 0 else out

    @property
    def support(self) -> tuple:
        raise NotImplementedError

    def mean(self) -> float:
        raise NotImplementedError

    def _moment_closed(self, n: int) -> float:
        raise NotImplementedError

    def _segments(self) -> list:
        raise NotImplementedError

    def params(self) -> dict:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"family": self.family, **self.params()}

    def sample(self, rng, size=None):
        """Inverse-CDF draws from a numpy ``Generator``; bit-reproducible per seed."""
        u = rng.random(size)
        return self.inverse_cdf(u)


def _check_finite(*values):
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float, np.floating, np.integer)):
            raise InvalidDistribution(f"parameter {v!r} is not a real number")
        if not math.isfinite(v):
            raise InvalidDistribution(f"parameter {v!r} is not finite")


@dataclass(frozen=True)
class Uniform(GenDistribution):
    a: float = 0.0
    b: float = 1.0
    family: ClassVar[str] = "uniform"

    def __post_init__(self):
        _check_finite(self.a, self.b)
        if not 0.0 <= self.a < self.b <= 1.0:
            raise InvalidDistribution(f"uniform needs 0 <= a < b <= 1, got a={self.a}, b={self.b}")

    def cdf(self, x):
        return np.clip((np.asarray(x, dtype=float) - self.a) / (self.b - self.a), 0.0, 1.0)

    def _quantile(self, u):
        return self.a + u * (self.b - self.a)

    @property
    def support(self):
        return (self.a, self.b)

    def mean(self):
        return 0.5 * (self.a + self.b)

    def _moment_closed(self, n):
        return (self.b ** (n + 1) - self.a ** (n + 1)) / ((n + 1) * (self.b - self.a))

    def _segments(self):
        return [_Segment("linear", self.a, self.b, density=1.0 / (self.b - self.a))]

    def params(self):
        return {"a": self.a, "b": self.b}


@dataclass(frozen=True)
class Beta(GenDistribution):
    alpha: float
    beta: float
    family: ClassVar[str] = "beta"

    def __post_init__(self):
        _check_finite(self.alpha, self.beta)
        if not (self.alpha > 0.0 and self.beta > 0.0):
            raise InvalidDistribution(f"beta needs alpha, beta > 0, got {self.alpha}, {self.beta}")

    def cdf(self, x):
        return special.betainc(self.alpha, self.beta, np.clip(np.asarray(x, dtype=float), 0.0, 1.0))

    def _quantile(self, u):
        return special.betaincinv(self.alpha, self.beta, u)

    @property
    def support(self):
        return (0.0, 1.0)

    def mean(self):
        return self.alpha / (self.alpha + self.beta)

    def _moment_closed(self, n):
        out = 1.0
        for k in range(n):
            out *= (self.alpha + k) / (self.alpha + self.beta + k)
        return out

    def _segments(self):
        a, b = self.alpha, self.beta
        log_norm = float(special.betaln(a, b))
        common = dict(alpha=a, beta=b, log_norm=log_norm)
        if a >= 1.0 and b >= 1.0:
            return [_Segment("linear", 0.0, 1.0, **common)]
        segs = []
        if a < 1.0:
            segs.append(_Segment("left", 0.0, 0.5**a, **common))
        else:
            segs.append(_Segment("linear", 0.0, 0.5, **common))
        if b < 1.0:
            segs.append(_Segment("right", 0.0, 0.5**b, **common))
        else:
            segs.append(_Segment("linear", 0.5, 1.0, **common))
        return segs

    def params(self):
        return {"alpha": self.alpha, "beta": self.beta}


@dataclass(frozen=True)
class PointMass(GenDistribution):
    c: float
    family: ClassVar[str] = "point_mass"

    def __post_init__(self):
        _check_finite(self.c)
        if not 0.0 <= self.c <= 1.0:
            raise InvalidDistribution(f"point_mass needs 0 <= c <= 1, got {self.c}")

    def cdf(self, x):
        return (np.asarray(x, dtype=float) >= self.c).astype(float)

    def _quantile(self, u):
        return np.full_like(np.asarray(u, dtype=float), self.c)

    @property
    def support(self):
        return (self.c, self.c)

    def mean(self):
        return self.c

    def _moment_closed(self, n):
        return self.c**n

    def _segments(self):
        return []

    def params(self):
        return {"c": self.c}


@dataclass(frozen=True)
class PiecewiseLinearCdf(GenDistribution):
    """CDF interpolating ``knots`` ((x, F), ...): x strictly increasing 0..1, F nondecreasing 0..1."""

    knots: tuple
    family: ClassVar[str] = "piecewise_linear_cdf"

    def __post_init__(self):
        try:
            knots = tuple((float(x), float(f)) for x, f in self.knots)
        except (TypeError, ValueError):
            raise InvalidDistribution(f"malformed knots {self.knots!r}") from None
        object.__setattr__(self, "knots", knots)
        xs, fs = self._xs, self._fs
        if len(knots) < 2 or not (np.all(np.isfinite(xs)) and np.all(np.isfinite(fs))):
            raise InvalidDistribution("piecewise_linear_cdf needs at least two finite knots")
        if xs[0] != 0.0 or xs[-1] != 1.0 or np.any(np.diff(xs) <= 0.0):
            raise InvalidDistribution("knot positions must increase strictly from 0 to 1")
        if fs[0] != 0.0 or fs[-1] != 1.0 or np.any(np.diff(fs) < 0.0):
            raise InvalidDistribution("knot CDF values must be nondecreasing from 0 to 1")

    @property
    def _xs(self):
        return np.array([k[0] for k in self.knots])

    @property
    def _fs(self):
        return np.array([k[1] for k in self.knots])

    def cdf(self, x):
        return np.interp(np.asarray(x, dtype=float), self._xs, self._fs)

    def _quantile(self, u):
        xs, fs = self._xs, self._fs
        k = np.clip(np.searchsorted(fs, u, side="left"), 1, len(fs) - 1)
        f0, f1 = fs[k - 1], fs[k]
        return xs[k - 1] + (u - f0) / (f1 - f0) * (xs[k] - xs[k - 1])

    @property
    def support(self):
        xs, fs = self._xs, self._fs
        lo = xs[np.searchsorted(fs, 0.0, side="right") - 1]
        hi = xs[np.searchsorted(fs, 1.0, side="left")]
        return (float(lo), float(hi))

    def _pieces(self):
        xs, fs = self._xs, self._fs
        for x0, x1, f0, f1 in zip(xs[:-1], xs[1:], fs[:-1], fs[1:]):
            if f1 > f0:
                yield x0, x1, (f1 - f0) / (x1 - x0)

    def mean(self):
        return float(sum(rho * (x1**2 - x0**2) / 2.0 for x0, x1, rho in self._pieces()))

    def _moment_closed(self, n):
        return float(sum(rho * (x1 ** (n + 1) - x0 ** (n + 1)) / (n + 1) for x0, x1, rho in self._pieces()))

    def _segments(self):
        return [_Segment("linear", x0, x1, density=rho) for x0, x1, rho in self._pieces()]

    def params(self):
        return {"knots": [list(k) for k in self.knots]}


FAMILIES = {cls.family: cls for cls in (Uniform, Beta, PointMass, PiecewiseLinearCdf)}


def distribution_from_dict(spec: dict) -> GenDistribution:
    if not isinstance(spec, dict) or spec.get("family") not in FAMILIES:
        raise InvalidDistribution(f"unknown distribution spec {spec!r}")
    params = {k: v for k, v in spec.items() if k != "family"}
    try:
        if spec["family"] == "piecewise_linear_cdf":
            return PiecewiseLinearCdf(tuple(tuple(k) for k in params["knots"]))
        return FAMILIES[spec["family"]](**params)
    except (TypeError, KeyError) as exc:
        raise InvalidDistribution(f"malformed distribution spec {spec!r}: {exc}") from None


def make(family: str, **params) -> GenDistribution:
    return distribution_from_dict({"family": family, **params})


# ---------------------------------------------------------------------------
# expectations


def expect_batch(d: GenDistribution, g, n_owners: int, breaks=None, tol=EXPECT_TOL):
    """E[g_k(X)] for k = 0..n_owners-1 under law ``d``.

    ``g(owner, x)`` is vectorised over an owner-id array ``(P,)`` and nodes
    ``(P, n)``.  ``breaks`` is an ``(n_owners, B)`` array of x positions where
    g_k is not smooth (NaN entries are ignored).
    """
    if isinstance(d, PointMass):
        owners = np.arange(n_owners)
        return np.asarray(g(owners, np.full((n_owners, 1), d.c)), dtype=float)[:, 0]
    total = np.zeros(n_owners)
    if breaks is None:
        breaks = np.empty((n_owners, 0))
    breaks = np.asarray(breaks, dtype=float).reshape(n_owners, -1)
    for seg in d._segments():
        t_breaks = seg.t_of_x(breaks)
        owner, a, b = panels_from_breaks(
            np.full(n_owners, seg.t0), np.full(n_owners, seg.t1), t_breaks
        )

        def f(o, t, seg=seg):
            x = seg.x_of_t(t)
            return np.asarray(g(o, x), dtype=float) * seg.weight(t, x)

        total += integrate_batch(f, owner, a, b, n_owners, tol=tol)
    return total


def expect_fn(d: GenDistribution, g, breaks=(), tol=EXPECT_TOL) -> float:
    """E[g(X)] for a vectorised callable ``g`` with optional kink positions."""
    _require(d)

    def gg(_o, x):
        vals = np.asarray(g(x), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ObjectiveDomainError("objective is not finite on the support")
        return vals

    row = np.array([list(breaks)], dtype=float)
    return float(expect_batch(d, gg, 1, row, tol=tol)[0])


def _require(d):
    if not isinstance(d, GenDistribution):
        raise InvalidDistribution(f"{d!r} is not a GenDistribution")


def mean(d: GenDistribution) -> float:
    _require(d)
    return float(d.mean())


@lru_cache(maxsize=65536)
def _expect_cached(d: GenDistribution, h: ObjectiveFn) -> float:
    if isinstance(d, PointMass):
        return float(h(d.c))
    if isinstance(h, Identity):
        return float(d.mean())
    if isinstance(h, Monomial):
        return float(d._moment_closed(h.n))
    return expect_fn(d, h, h.kinks)


def expect(d: GenDistribution, h) -> float:
    """E[h(X)] under ``d``; ``h`` is an ObjectiveFn or a vectorised callable."""
    _require(d)
    if isinstance(h, ObjectiveFn):
        return _expect_cached(d, h)
    if callable(h):
        return expect_fn(d, h, getattr(h, "kinks", ()))
    raise ObjectiveDomainError(f"{h!r} is not an objective")


def moment(d: GenDistribution, n: int) -> float:
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise ValueError(f"moment order must be a positive integer, got {n!r}")
    return expect(d, Monomial(int(n)))


def inverse_cdf(d: GenDistribution, u: float):
    _require(d)
    return d.inverse_cdf(u)


def sample(d: GenDistribution, rng) -> float:
    _require(d)
    return float(d.sample(rng))
