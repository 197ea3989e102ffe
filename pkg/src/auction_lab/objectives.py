"""Objective functions of the social planner on the unit interval.

Each kind is bounded on [0, 1], so it is integrable against every supported
generation law.  Membership in the nonnegative, nondecreasing class used by
the penalty mechanisms is decided analytically from the parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import ClassVar

import numpy as np

from .errors import DomainError, InvalidObjective


class ObjectiveFn:
    """Base class.  Instances are immutable, hashable and vectorised."""

    kind: ClassVar[str]

    def __call__(self, x):
        raise NotImplementedError

    def eval(self, x: float) -> float:
        if not 0.0 <= x <= 1.0:
            raise DomainError(f"objective evaluated at {x!r}, outside [0, 1]")
        return float(self(np.float64(x)))

    @property
    def kinks(self) -> tuple:
        """Points in (0, 1) where the function is not smooth."""
        return ()

    def is_in_Hp(self) -> bool:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Identity(ObjectiveFn):
    kind: ClassVar[str] = "identity"

    def __call__(self, x):
        return np.asarray(x, dtype=float)

    def is_in_Hp(self):
        return True

    def to_dict(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class CappedDemand(ObjectiveFn):
    """min{x, D}: the planner has no use for output beyond demand D."""

    D: float
    kind: ClassVar[str] = "capped_demand"

    def __post_init__(self):
        if not (math.isfinite(self.D) and 0.0 < self.D <= 1.0):
            raise InvalidObjective(f"capped_demand needs 0 < D <= 1, got {self.D!r}")

    def __call__(self, x):
        return np.minimum(np.asarray(x, dtype=float), self.D)

    @property
    def kinks(self):
        return (self.D,) if self.D < 1.0 else ()

    def is_in_Hp(self):
        return True

    def to_dict(self):
        return {"kind": self.kind, "D": self.D}


@dataclass(frozen=True)
class Monomial(ObjectiveFn):
    n: int
    kind: ClassVar[str] = "monomial"

    def __post_init__(self):
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 1:
            raise InvalidObjective(f"monomial degree must be an integer >= 1, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))

    def __call__(self, x):
        return np.asarray(x, dtype=float) ** self.n

    def is_in_Hp(self):
        return True

    def to_dict(self):
        return {"kind": self.kind, "n": self.n}


@dataclass(frozen=True)
class PiecewiseLinear(ObjectiveFn):
    """Linear interpolation through ``knots`` = ((x0, y0), ..., (xk, yk)), x0=0, xk=1."""

    knots: tuple
    kind: ClassVar[str] = "piecewise_linear"

    def __post_init__(self):
        knots = tuple((float(x), float(y)) for x, y in self.knots)
        object.__setattr__(self, "knots", knots)
        xs = np.array([k[0] for k in knots])
        ys = np.array([k[1] for k in knots])
        if len(knots) < 2 or not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
            raise InvalidObjective("piecewise_linear needs at least two finite knots")
        if xs[0] != 0.0 or xs[-1] != 1.0 or np.any(np.diff(xs) <= 0):
            raise InvalidObjective("piecewise_linear knots must increase strictly from 0 to 1")

    @property
    def _xs(self):
        return np.array([k[0] for k in self.knots])

    @property
    def _ys(self):
        return np.array([k[1] for k in self.knots])

    def __call__(self, x):
        return np.interp(np.asarray(x, dtype=float), self._xs, self._ys)

    @property
    def kinks(self):
        return tuple(k[0] for k in self.knots[1:-1])

    def is_in_Hp(self):
        ys = self._ys
        return bool(ys.min() >= 0.0 and np.all(np.diff(ys) >= 0.0))

    def to_dict(self):
        return {"kind": self.kind, "knots": [list(k) for k in self.knots]}


@dataclass(frozen=True)
class AffineClip(ObjectiveFn):
    """a + b*x clipped to [lo, hi]; omitted bounds mean no clipping."""

    a: float
    b: float
    lo: float = -math.inf
    hi: float = math.inf
    kind: ClassVar[str] = "affine_clip"

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise InvalidObjective("affine_clip needs finite a and b")
        if math.isnan(self.lo) or math.isnan(self.hi) or self.lo > self.hi:
            raise InvalidObjective("affine_clip needs lo <= hi")

    def __call__(self, x):
        return np.clip(self.a + self.b * np.asarray(x, dtype=float), self.lo, self.hi)

    @property
    def kinks(self):
        if self.b == 0.0:
            return ()
        out = []
        for level in (self.lo, self.hi):
            if math.isfinite(level):
                t = (level - self.a) / self.b
                if 0.0 < t < 1.0:
                    out.append(t)
        return tuple(sorted(out))

    def is_in_Hp(self):
        at0, at1 = float(self(0.0)), float(self(1.0))
        nondecreasing = self.b >= 0.0 or at0 == at1
        # monotone, so the minimum sits at an endpoint
        return bool(nondecreasing and min(at0, at1) >= 0.0)

    def to_dict(self):
        d = {"kind": self.kind, "a": self.a, "b": self.b}
        if math.isfinite(self.lo):
            d["lo"] = self.lo
        if math.isfinite(self.hi):
            d["hi"] = self.hi
        return d


_KINDS = {
    "identity": lambda d: Identity(),
    "capped_demand": lambda d: CappedDemand(float(d["D"])),
    "monomial": lambda d: Monomial(d["n"]),
    "piecewise_linear": lambda d: PiecewiseLinear(tuple(tuple(k) for k in d["knots"])),
    "affine_clip": lambda d: AffineClip(
        float(d["a"]), float(d["b"]), float(d.get("lo", -math.inf)), float(d.get("hi", math.inf))
    ),
}


def objective_from_dict(spec: dict) -> ObjectiveFn:
    try:
        build = _KINDS[spec["kind"]]
    except KeyError:
        raise InvalidObjective(f"unknown objective spec {spec!r}") from None
    try:
        return build(spec)
    except (KeyError, TypeError) as exc:
        raise InvalidObjective(f"malformed objective spec {spec!r}: {exc}") from None


def eval(h: ObjectiveFn, x: float) -> float:  # noqa: A001 - mirrors the operation name
    return h.eval(x)


def is_in_Hp(h: ObjectiveFn) -> bool:
    return h.is_in_Hp()
