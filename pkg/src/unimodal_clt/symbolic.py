"""Monotonicity partitions in phase space, cylinders in parameter space,
and the depth N(t, h) at which derivative growth along the critical orbit
reaches 1/|h|."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import AmbiguityError, ResolutionError, ResourceError
from .maps import MapFamily, iterate_critical

MAX_PHASE_LEVEL = 40
MAX_PHASE_INTERVALS = 2**20


@dataclass(frozen=True)
class PhasePartition:
    t: float
    j: int
    intervals: tuple

    def __len__(self):
        return len(self.intervals)


@dataclass(frozen=True)
class ParamPartition:
    J: tuple
    j: int
    cylinders: tuple
    boundaries: tuple

    def __len__(self):
        return len(self.cylinders)


def _iterate(family, t, x, k):
    for _ in range(k):
        x = float(family.f(t, x))
    return x


def phase_partition(family: MapFamily, t, j) -> PhasePartition:
    """Maximal open subintervals of K(t) on which f_t^j is monotone.

    Level j+1 refines level j by splitting each interval at the (unique,
    by monotonicity) point where f_t^j hits c.
    """
    if j < 1:
        raise ValueError("level must be >= 1")
    if j > MAX_PHASE_LEVEL:
        raise ResourceError(f"level {j} exceeds the supported depth {MAX_PHASE_LEVEL}")
    family.check_t(t)
    c = family.c
    lo, hi = family.support(t)
    intervals = [(lo, hi)]
    for level in range(j):
        refined = []
        for a, b in intervals:
            fa = _iterate(family, t, a, level)
            fb = _iterate(family, t, b, level)
            if min(fa, fb) < c < max(fa, fb):
                root = brentq(lambda x: _iterate(family, t, x, level) - c, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps)
                refined.extend([(a, root), (root, b)])
            else:
                refined.append((a, b))
        intervals = refined
        if len(intervals) > MAX_PHASE_INTERVALS:
            raise ResourceError(f"partition at level {level + 1} has {len(intervals)} intervals")
    return PhasePartition(t=float(t), j=j, intervals=tuple(intervals))


def _orbit_table(family, ts, j):
    """x_i(t) for i = 0..j-1, where x_0(t) = f_t(c)."""
    return np.array(list(iterate_critical(family, ts, j)))


def param_partition(family: MapFamily, J, j, tol=1e-12, scan=10_000) -> ParamPartition:
    """Cylinders of level j in the parameter interval J.

    Boundaries are parameters s with x_i(s) = c for some i < j.  Each
    x_i(t) - c is scanned on ``scan`` points and every sign change is
    refined by bisection.  A scan cell whose finer resampling shows more
    than one sign change raises :class:`ResolutionError`.
    """
    if j < 1:
        raise ValueError("level must be >= 1")
    a, b = (float(v) for v in J)
    family.check_t(a)
    family.check_t(b)
    if not a < b:
        raise ValueError("parameter interval must have positive length")
    c = family.c
    grid = np.linspace(a, b, scan + 1)
    table = _orbit_table(family, grid, j) - c
    roots = []
    for i in range(j):
        vals = table[i]
        sign = np.sign(vals)
        cells = np.nonzero(sign[:-1] * sign[1:] < 0)[0]

        def g(s, i=i):
            x = c
            for _ in range(i + 1):
                x = float(family.f(s, x))
            return x - c

        for k in range(vals.size):
            if vals[k] == 0.0 and a < grid[k] < b:
                roots.append(float(grid[k]))
        for k in cells:
            lo, hi = grid[k], grid[k + 1]
            fine = np.linspace(lo, hi, 33)
            fs = np.sign(_orbit_table(family, fine, i + 1)[i] - c)
            if np.count_nonzero(fs[:-1] * fs[1:] < 0) > 1:
                raise ResolutionError(f"several roots of x_{i}(t) = c inside [{lo}, {hi}]")
            roots.append(float(_bisect(g, float(lo), float(hi), tol)))
    roots = sorted(roots)
    merged = []
    for r in roots:
        if not merged or r - merged[-1] > tol:
            merged.append(r)
    edges = [a] + [r for r in merged if a + tol < r < b - tol] + [b]
    cylinders = tuple((edges[k], edges[k + 1]) for k in range(len(edges) - 1))
    return ParamPartition(J=(a, b), j=j, cylinders=cylinders, boundaries=tuple(edges[1:-1]))


def _bisect(g, lo, hi, tol):
    glo = g(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if gm == 0.0:
            return mid
        if (gm < 0) == (glo < 0):
            lo, glo = mid, gm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def n_of(family: MapFamily, t, h, max_depth=100_000):
    """The unique N with 1/|Df^{N+1}(f(c))| <= |h| < 1/|Df^N(f(c))|.

    |Df^N| is accumulated as a float mantissa times a power of two, so the
    comparison |h| |Df^N| >= 1 is exact whenever the factors are.
    """
    h = abs(float(h))
    if h == 0.0:
        raise ValueError("h must be nonzero")
    if h >= 1.0:
        raise ValueError("|h| must be < 1 for N(t, h) to exist")
    family.check_t(t)
    c = family.c
    x = family.critical_value(t)
    mant, expo = 1.0, 0
    for N in range(max_depth):
        if x == c:
            raise AmbiguityError(f"critical orbit hits c at index {N + 1} (t={t})", index=N + 1)
        mant *= abs(float(family.df(t, x)))
        mant, e = math.frexp(mant)
        expo += e
        # |h| * |Df^{N+1}| >= 1 ?
        if _scaled_ge_one(h * mant, expo):
            return N
        x = float(family.f(t, x))
    raise ValueError(f"N(t, h) exceeds {max_depth}")


def _scaled_ge_one(m, e):
    # m * 2**e = m2 * 2**(e2 + e) with m2 in [0.5, 1), so it is >= 1 iff e2 + e >= 1
    m2, e2 = math.frexp(m)
    return m2 > 0 and e2 + e >= 1
