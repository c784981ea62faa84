"""Piecewise expanding unimodal maps and one-parameter families of them.

A family is described by its parameter window, the (fixed) turning point
``c`` and two branch specifications giving f_t, its x-derivatives up to
order 3 and the parameter velocity v_t = d/dt f_t on each side of ``c``.
The tent family is built in; anything else goes through
:class:`CustomFamily` with analytic derivatives supplied by the caller.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConstructionError, DomainError

SQRT2 = math.sqrt(2.0)

# Relative slack for parameter/phase domain checks.
_DOMAIN_EPS = 1e-12


@dataclass(frozen=True)
class Branch:
    """One monotone branch of a unimodal map, already bound to a parameter."""

    f: Callable[[np.ndarray], np.ndarray]
    d1: Callable[[np.ndarray], np.ndarray]
    d2: Callable[[np.ndarray], np.ndarray]
    d3: Callable[[np.ndarray], np.ndarray]

    def derivative(self, x, order):
        return (self.d1, self.d2, self.d3)[order - 1](x)


@dataclass(frozen=True)
class UnimodalMap:
    """A single piecewise expanding unimodal map on [0, 1].

    ``lam`` and ``Lam`` bound |Df| from below and above off the critical
    point.  Evaluation at exactly ``c`` uses the right branch (both branch
    values agree there); derivative queries at ``c`` need an explicit side.
    """

    c: float
    left: Branch
    right: Branch
    lam: float
    Lam: float

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x < self.c, self.left.f(x), self.right.f(x))
        return out if out.ndim else float(out)

    def derivative(self, x, order=1, side=None):
        if order not in (1, 2, 3):
            raise ValueError(f"derivative order must be 1, 2 or 3, got {order!r}")
        x = np.asarray(x, dtype=float)
        at_c = x == self.c
        if np.any(at_c) and side is None:
            raise ValueError("derivative at the critical point needs side='left' or 'right'")
        if side not in (None, "left", "right"):
            raise ValueError(f"side must be 'left' or 'right', got {side!r}")
        use_left = x < self.c
        if side == "left":
            use_left = use_left | at_c
        out = np.where(use_left, self.left.derivative(x, order), self.right.derivative(x, order))
        return out if out.ndim else float(out)

    def check(self, atol=1e-12):
        """Verify f(0) = f(1) = 0, continuity at c and f(c) <= 1."""
        f0 = float(self.left.f(np.float64(0.0)))
        f1 = float(self.right.f(np.float64(1.0)))
        fl = float(self.left.f(np.float64(self.c)))
        fr = float(self.right.f(np.float64(self.c)))
        if abs(f0) > atol or abs(f1) > atol:
            raise ConstructionError(f"endpoints must map to 0, got f(0)={f0}, f(1)={f1}")
        if abs(fl - fr) > atol:
            raise ConstructionError(f"branches disagree at c: {fl} vs {fr}")
        if fl > 1 + atol or fl <= 0:
            raise ConstructionError(f"critical value {fl} outside (0, 1]")
        if self.lam <= 1:
            raise ConstructionError(f"map is not expanding: inf|Df| = {self.lam}")
        return self


class MapFamily:
    """Base class for one-parameter families t -> f_t with a common c.

    Subclasses implement the vectorised primitives ``f``, ``df``,
    ``velocity_raw`` and ``inverse``; all of them broadcast over ``t`` and
    ``x`` and skip domain checks, so they are safe to use in inner loops.
    """

    kind = "abstract"
    piecewise_linear = False
    c: float
    param_min: float
    param_max: float

    # -- domain helpers -------------------------------------------------
    def check_t(self, t):
        lo, hi = self.param_min, self.param_max
        slack = _DOMAIN_EPS * max(1.0, abs(hi))
        if not (lo - slack <= t <= hi + slack):
            raise DomainError(f"parameter t={t!r} outside [{lo}, {hi}]")

    @staticmethod
    def check_x(x):
        arr = np.asarray(x, dtype=float)
        if np.any(~np.isfinite(arr)) or np.any(arr < -_DOMAIN_EPS) or np.any(arr > 1 + _DOMAIN_EPS):
            raise DomainError("phase point outside [0, 1]")

    # -- primitives (overridden) ----------------------------------------
    def f(self, t, x):
        raise NotImplementedError

    def df(self, t, x, order=1, side="right"):
        raise NotImplementedError

    def velocity_raw(self, t, x):
        raise NotImplementedError

    def inverse(self, t, y, branch):
        """Preimage of ``y`` (in [0, f_t(c)]) under the given branch."""
        raise NotImplementedError

    def expansion_bounds(self, t):
        """(inf |Df_t|, sup |Df_t|) over x != c."""
        raise NotImplementedError

    def velocity_sup(self, t):
        """sup_x |v_t(x)|."""
        raise NotImplementedError

    # -- derived ----------------------------------------------------------
    def map_at(self, t) -> UnimodalMap:
        raise NotImplementedError

    def critical_value(self, t):
        return float(self.f(t, self.c))

    def support(self, t):
        """K(t) = [f_t^2(c), f_t(c)]."""
        v = self.critical_value(t)
        return (float(self.f(t, v)), v)

    def spec(self):
        """Plain-data description, enough to rebuild the family in a worker."""
        raise NotImplementedError


@dataclass(frozen=True)
class TentFamily(MapFamily):
    """f_t(x) = t x on [0, 1/2), t - t x on [1/2, 1]; v_t(x) = min(x, 1 - x)."""

    param_min: float = 1.2
    param_max: float = 2.0
    c: float = field(default=0.5, init=False)
    kind = "tent"
    piecewise_linear = True

    def __post_init__(self):
        if not (1.0 < self.param_min <= self.param_max <= 2.0):
            raise ConstructionError(
                f"tent window must satisfy 1 < a <= b <= 2, got [{self.param_min}, {self.param_max}]"
            )

    def f(self, t, x):
        return np.where(x < 0.5, t * x, t - t * x)

    def df(self, t, x, order=1, side="right"):
        x = np.asarray(x, dtype=float)
        if order > 1:
            return np.zeros(np.broadcast(np.asarray(t), x).shape)
        left = (x < 0.5) | ((x == 0.5) & (side == "left"))
        return np.where(left, t, -np.asarray(t, dtype=float))

    def velocity_raw(self, t, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < 0.5, x, 1.0 - x) + 0.0 * np.asarray(t)

    def inverse(self, t, y, branch):
        y = np.asarray(y, dtype=float)
        return y / t if branch == "left" else 1.0 - y / t

    def expansion_bounds(self, t):
        return (float(t), float(t))

    def velocity_sup(self, t):
        return 0.5

    def map_at(self, t) -> UnimodalMap:
        self.check_t(t)
        t = float(t)
        zero = lambda x: np.zeros_like(np.asarray(x, dtype=float))  # noqa: E731
        left = Branch(
            f=lambda x: t * np.asarray(x, dtype=float),
            d1=lambda x: np.full_like(np.asarray(x, dtype=float), t),
            d2=zero,
            d3=zero,
        )
        right = Branch(
            f=lambda x: t - t * np.asarray(x, dtype=float),
            d1=lambda x: np.full_like(np.asarray(x, dtype=float), -t),
            d2=zero,
            d3=zero,
        )
        return UnimodalMap(c=0.5, left=left, right=right, lam=t, Lam=t)

    def spec(self):
        return {"family": "tent", "param_min": self.param_min, "param_max": self.param_max}


@dataclass(frozen=True)
class BranchSpec:
    """Branch formulas of a custom family, each a function of (t, x).

    ``d`` holds the x-derivatives of orders 1..3 and ``dt`` the parameter
    derivative.  All callables must broadcast over numpy arrays.
    """

    f: Callable
    d: tuple
    dt: Callable


@dataclass(frozen=True)
class CustomFamily(MapFamily):
    """A general two-branch family given by analytic formulas.

    Expansion bounds and sup|v| are estimated by sampling ``bound_samples``
    points per branch unless explicit callables are provided.
    """

    c: float
    param_min: float
    param_max: float
    left: BranchSpec
    right: BranchSpec
    bounds: Optional[Callable] = None
    bound_samples: int = 4097
    kind = "custom"

    def __post_init__(self):
        if not 0 < self.c < 1:
            raise ConstructionError(f"critical point must lie in (0, 1), got {self.c}")
        if self.param_min > self.param_max:
            raise ConstructionError("empty parameter window")

    def _branch_grids(self):
        m = self.bound_samples
        return np.linspace(0.0, self.c, m), np.linspace(self.c, 1.0, m)

    def f(self, t, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < self.c, self.left.f(t, x), self.right.f(t, x))

    def df(self, t, x, order=1, side="right"):
        x = np.asarray(x, dtype=float)
        left = (x < self.c) | ((x == self.c) & (side == "left"))
        return np.where(left, self.left.d[order - 1](t, x), self.right.d[order - 1](t, x))

    def velocity_raw(self, t, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < self.c, self.left.dt(t, x), self.right.dt(t, x))

    def inverse(self, t, y, branch):
        # Vectorised bisection on the monotone branch.
        y = np.asarray(y, dtype=float)
        spec = self.left if branch == "left" else self.right
        lo = np.full(y.shape, 0.0 if branch == "left" else self.c)
        hi = np.full(y.shape, self.c if branch == "left" else 1.0)
        increasing = branch == "left"
        for _ in range(64):
            mid = 0.5 * (lo + hi)
            below = spec.f(t, mid) < y
            go_right = below if increasing else ~below
            lo = np.where(go_right, mid, lo)
            hi = np.where(go_right, hi, mid)
        return 0.5 * (lo + hi)

    def expansion_bounds(self, t):
        if self.bounds is not None:
            return tuple(float(v) for v in self.bounds(t))
        xl, xr = self._branch_grids()
        d = np.abs(np.concatenate([self.left.d[0](t, xl), self.right.d[0](t, xr)]))
        return (float(d.min()), float(d.max()))

    def velocity_sup(self, t):
        xl, xr = self._branch_grids()
        v = np.abs(np.concatenate([self.left.dt(t, xl), self.right.dt(t, xr)]))
        return float(v.max())

    def map_at(self, t) -> UnimodalMap:
        self.check_t(t)

        def bind(spec):
            return Branch(
                f=lambda x: spec.f(t, np.asarray(x, dtype=float)),
                d1=lambda x: spec.d[0](t, np.asarray(x, dtype=float)),
                d2=lambda x: spec.d[1](t, np.asarray(x, dtype=float)),
                d3=lambda x: spec.d[2](t, np.asarray(x, dtype=float)),
            )

        lam, Lam = self.expansion_bounds(t)
        return UnimodalMap(c=self.c, left=bind(self.left), right=bind(self.right), lam=lam, Lam=Lam).check()

    def spec(self):
        raise TypeError("custom families carry callables and cannot be serialised")


def make_family(family="tent", param_min=None, param_max=None) -> MapFamily:
    """Build a family from configuration values."""
    if family != "tent":
        raise ValueError(f"unknown family {family!r}; only 'tent' is configurable")
    kwargs = {}
    if param_min is not None:
        kwargs["param_min"] = float(param_min)
    if param_max is not None:
        kwargs["param_max"] = float(param_max)
    return TentFamily(**kwargs)


def family_from_spec(spec) -> MapFamily:
    return make_family(spec["family"], spec.get("param_min"), spec.get("param_max"))


# -- module-level operations ---------------------------------------------

def eval_map(family: MapFamily, t, x):
    """f_t(x), with domain checks on t and x."""
    family.check_t(t)
    family.check_x(x)
    out = family.f(t, np.asarray(x, dtype=float))
    return out if np.ndim(out) else float(out)


def map_derivative(family: MapFamily, t, x, order=1, side=None):
    """One-sided derivative D^order f_t(x); ``side`` is required at x = c."""
    if order not in (1, 2, 3):
        raise ValueError(f"derivative order must be 1, 2 or 3, got {order!r}")
    family.check_t(t)
    family.check_x(x)
    x = np.asarray(x, dtype=float)
    if np.any(x == family.c) and side is None:
        raise ValueError("derivative at the critical point needs side='left' or 'right'")
    out = family.df(t, x, order=order, side=side or "right")
    return out if np.ndim(out) else float(out)


def velocity(family: MapFamily, t, x):
    """v_t(x) = d/ds f_s(x) at s = t."""
    family.check_t(t)
    family.check_x(x)
    out = family.velocity_raw(t, np.asarray(x, dtype=float))
    return out if np.ndim(out) else float(out)


def below_mixing_threshold(family: MapFamily, t) -> bool:
    """True when inf |Df_t| <= sqrt(2), i.e. renormalisation is not excluded."""
    return family.expansion_bounds(t)[0] <= SQRT2


def critical_orbit(family: MapFamily, t, n, precision="double"):
    """(f_t(c), f_t^2(c), ..., f_t^n(c)) by iterated evaluation.

    ``precision="compensated"`` carries each iterate as an unevaluated sum
    of two doubles (tent family only), which postpones the linear loss of
    digits along long orbits.
    """
    if n < 1:
        raise ValueError("orbit length must be >= 1")
    family.check_t(t)
    if precision == "compensated":
        if not isinstance(family, TentFamily):
            raise ValueError("compensated orbits are implemented for the tent family only")
        return _tent_orbit_dd(float(t), n)
    if precision != "double":
        raise ValueError(f"unknown precision {precision!r}")
    out = np.empty(n)
    x = family.c
    for i in range(n):
        x = float(family.f(t, x))
        out[i] = x
    return out


def iterate_critical(family: MapFamily, ts, n):
    """Yield x_j = f_t^j(c) for j = 1..n, vectorised over an array of t."""
    ts = np.asarray(ts, dtype=float)
    x = np.full(ts.shape, family.c)
    for _ in range(n):
        x = family.f(ts, x)
        yield x


# -- double-double helpers for the compensated tent orbit -------------------

_SPLITTER = 134217729.0  # 2**27 + 1


def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _split(a):
    p = _SPLITTER * a
    hi = p - (p - a)
    return hi, a - hi


def _two_prod(a, b):
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


def _dd_mul_d(hi, lo, b):
    p, e = _two_prod(hi, b)
    e += lo * b
    return _two_sum(p, e)


def _tent_orbit_dd(t, n):
    out = np.empty(n)
    hi, lo = 0.5, 0.0
    for i in range(n):
        if hi < 0.5 or (hi == 0.5 and lo < 0.0):
            hi, lo = _dd_mul_d(hi, lo, t)
        else:
            # t - t x = t (1 - x)
            ohi, olo = _two_sum(1.0, -hi)
            olo -= lo
            ohi, olo = _two_sum(ohi, olo)
            hi, lo = _dd_mul_d(ohi, olo, t)
        out[i] = hi + lo
    return out
