"""Newton quotients of t -> R_phi(t) and their orbit-sum description.

The jump of rho_t at f_t^{k+1}(c) moves by roughly h v_t(f_t^k(c)) when
the parameter moves to t + h; pushing that small "spike" forward under
f_{t+h} keeps it a spike until it straddles the critical point.  Summing
the spikes' contributions gives the wild part of the Newton quotient,
which is compared here with the critical-orbit Birkhoff sum.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .maps import MapFamily, critical_orbit
from .quantities import Observable, get_observable, response
from .symbolic import n_of
from .transfer import DensityGrid, build_ulam, invariant_density, saltus_weights

DIRECT_MIN_H = 1e-6
FINE_GRID_H = 1e-4
FINE_GRID_MIN_N = 2**17


@dataclass(frozen=True)
class SpikeSet:
    """Forward images of one spike [f_{t+h}(y), f_t(y)], y = f_t^k(c).

    ``endpoints[i]`` is (f_{t+h}^{i+1}(y), f_{t+h}^i(f_t^{k+1}(c))); the last
    row is the straddling interval when ``straddle_depth`` is not None.
    ``mass`` is the signed integral (a_0 - b_0)/h of the Heaviside
    difference, ~ v_t(y); ``weight`` multiplies it by s_{k+1}(t).
    """

    k: int
    endpoints: np.ndarray
    mass: float
    weight: Optional[float]
    straddle_depth: Optional[int]
    degenerate: bool

    @property
    def bounds(self):
        return np.sort(self.endpoints, axis=1)

    @property
    def widths(self):
        return np.abs(self.endpoints[:, 0] - self.endpoints[:, 1])


def _check_pair(family, t, h):
    if h == 0:
        raise ValueError("h must be nonzero")
    family.check_t(t)
    family.check_t(t + h)


def spike_propagate(family: MapFamily, t, h, k, depth_cap=200, s_next=None) -> SpikeSet:
    """Iterate both spike endpoints under f_{t+h} until c is straddled."""
    if k < 0:
        raise ValueError("k must be >= 0")
    _check_pair(family, t, h)
    c = family.c
    y = family.c
    for _ in range(k):
        y = float(family.f(t, y))
    a = float(family.f(t + h, y))
    b = float(family.f(t, y))
    mass = (a - b) / h
    weight = None if s_next is None else s_next * mass
    if a == b:
        return SpikeSet(k, np.array([[a, b]]), mass, weight, None, True)
    rows = []
    depth = None
    for i in range(depth_cap + 1):
        rows.append((a, b))
        if min(a, b) <= c <= max(a, b):
            depth = i
            break
        if i < depth_cap:
            a = float(family.f(t + h, a))
            b = float(family.f(t + h, b))
    return SpikeSet(k, np.array(rows), mass, weight, depth, False)


def straddle_depths(family: MapFamily, t, h, k_max, depth_cap):
    """Straddle depth of spikes k = 0..k_max-1 (depth_cap when they never do)."""
    out = []
    for k in range(k_max):
        sp = spike_propagate(family, t, h, k, depth_cap)
        if sp.degenerate or sp.straddle_depth is None:
            out.append(depth_cap)
        else:
            out.append(sp.straddle_depth)
    return out


def n3_estimate(family: MapFamily, t, h, k_max=None, depth_cap=None):
    """Largest n <= N(t, h) such that no spike k < n straddles c before depth n - k."""
    N = n_of(family, t, h)
    k_max = N if k_max is None else min(k_max, N)
    depth_cap = N + 1 if depth_cap is None else depth_cap
    depths = straddle_depths(family, t, h, k_max, depth_cap)
    n3 = 0
    reach = math.inf
    for n in range(1, N + 1):
        if n - 1 < len(depths):
            reach = min(reach, (n - 1) + depths[n - 1])
        if reach >= n:
            n3 = n
        else:
            break
    return n3


def wild_integral(
    family: MapFamily, t, h, phi, density: DensityGrid, K_trunc=None, depth_cap=None, saltus=None
):
    """Leading-order value of int phi W(t, h) dm.

    sum over spikes k <= K_trunc of s_{k+1} v_t(f^k c) times the centred
    orbit sum sum_{i < D_k} (phi(f^{i+k+1} c) - R_phi(t)), D_k the spike's
    straddle depth.
    """
    phi = get_observable(phi)
    _check_pair(family, t, h)
    if saltus is None:
        saltus = saltus_weights(family, t, density, K_trunc)
    K = len(saltus.weights) if K_trunc is None else min(K_trunc, len(saltus.weights))
    if depth_cap is None:
        depth_cap = 2 * n_of(family, t, h) + 10
    R = response(family, t, density, phi)
    orbit = critical_orbit(family, t, K + depth_cap + 1)
    centred = phi(orbit) - R  # centred[j-1] belongs to f^j(c)
    vel = family.velocity_raw(t, np.concatenate([[family.c], orbit[: K - 1]]))
    total = 0.0
    for k in range(K):
        sp = spike_propagate(family, t, h, k, depth_cap)
        if sp.degenerate or vel[k] == 0.0:
            continue
        depth = depth_cap if sp.straddle_depth is None else sp.straddle_depth
        total += saltus.weights[k] * vel[k] * float(centred[k : k + depth].sum())
    return total


def birkhoff_surrogate(family: MapFamily, t, N, phi, density: DensityGrid, R=None):
    """sum_{j=1}^{N} (phi(f_t^j(c)) - R_phi(t))."""
    if N < 1:
        raise ValueError("N must be >= 1")
    phi = get_observable(phi)
    if R is None:
        R = response(family, t, density, phi)
    orbit = critical_orbit(family, t, N)
    return float(np.sum(phi(orbit) - R))


def newton_quotient(family: MapFamily, t, h, phi, n_grid, density_t=None):
    """(R_phi(t + h) - R_phi(t)) / h with both densities on ``n_grid`` cells.

    Refused for |h| < 1e-6; for |h| < 1e-4 the grid must have at least 2^17
    cells, since the density difference lives in spikes of width ~|h|.
    """
    phi = get_observable(phi)
    if h == 0:
        raise ValueError("h must be nonzero")
    family.check_t(t)
    family.check_t(t + h)
    if abs(h) < DIRECT_MIN_H:
        raise ValueError(f"direct Newton quotients need |h| >= {DIRECT_MIN_H}")
    if abs(h) < FINE_GRID_H and n_grid < FINE_GRID_MIN_N:
        raise ValueError(f"|h| < {FINE_GRID_H} needs n_grid >= {FINE_GRID_MIN_N}")
    if abs(h) < FINE_GRID_H:
        warnings.warn(
            "Newton quotient with |h| < 1e-4: Ulam error must stay well below |h|", RuntimeWarning, stacklevel=2
        )
    if density_t is None:
        density_t = invariant_density(build_ulam(family, t, n_grid))
    elif density_t.n != n_grid:
        raise ValueError("density_t grid does not match n_grid")
    density_h = invariant_density(build_ulam(family, t + h, n_grid), start=density_t.values)
    return (response(family, t + h, density_h, phi) - response(family, t, density_t, phi)) / h
