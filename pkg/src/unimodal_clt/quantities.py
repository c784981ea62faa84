"""Scalar dynamical quantities of a single map f_t.

L_t (Lyapunov exponent), ell_t = 1/sqrt(L_t), S_t (density jump at the
critical value), J (transversality series), sigma_t (dynamical standard
deviation of an observable), R_phi(t) = int phi d mu_t and the product
Psi(t) = sigma_t S_t J_t ell_t.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, asdict
from typing import Callable, Optional

import numpy as np

from .errors import NearPeriodicWarning, ValidationError, VarianceError
from .maps import MapFamily
from .transfer import DensityGrid, UlamMatrix, build_ulam, invariant_density, saltus_weights

NEAR_PERIODIC_DIST = 1e-13


@dataclass(frozen=True)
class Observable:
    name: str
    func: Callable
    lipschitz_bound: float

    def __call__(self, x):
        return self.func(np.asarray(x, dtype=float))

    def affine(self, scale, shift=0.0):
        """The observable scale * phi + shift."""
        f = self.func
        return Observable(
            name=f"{scale!r}*{self.name}+{shift!r}",
            func=lambda x: scale * f(x) + shift,
            lipschitz_bound=abs(scale) * self.lipschitz_bound,
        )


def _const(value):
    return lambda x: np.full(np.shape(x), value, dtype=float)


OBSERVABLES = {
    "identity": Observable("identity", lambda x: x + 0.0, 1.0),
    "square": Observable("square", lambda x: x * x, 2.0),
    "cosine": Observable("cosine", lambda x: np.cos(2 * np.pi * x), 2 * np.pi),
    "constant": Observable("constant", _const(1.0), 0.0),
}


def get_observable(name) -> Observable:
    if isinstance(name, Observable):
        return name
    try:
        return OBSERVABLES[name]
    except KeyError:
        raise ValueError(f"unknown observable {name!r}; choose from {sorted(OBSERVABLES)}") from None


def cell_values(phi: Observable, density: DensityGrid):
    return np.asarray(phi(density.midpoints), dtype=float)


def _weighted_mean(values, density):
    return float(np.sum(density.values * values) / np.sum(density.values))


def response(family: MapFamily, t, density: DensityGrid, phi: Observable):
    """R_phi(t) by the midpoint rule against the cell densities."""
    vals = cell_values(phi, density)
    if np.all(vals == vals[0]):
        # mu_t is a probability measure
        return float(vals[0])
    return _weighted_mean(vals, density)


def lyapunov(family: MapFamily, t, density: DensityGrid):
    """L_t = int log|Df_t| d mu_t by midpoint quadrature."""
    logs = np.log(np.abs(family.df(t, density.midpoints)))
    L = _weighted_mean(logs, density)
    if not L > 0:
        raise ValidationError(f"non-positive Lyapunov exponent {L} at t={t}")
    return L


def lyapunov_birkhoff(family: MapFamily, t, steps=10**7, orbits=1000, burn_in=100, seed=0):
    """Time average of log|Df_t| over ``orbits`` parallel random orbits."""
    rng = np.random.default_rng(seed)
    lo, hi = family.support(t)
    x = lo + (hi - lo) * rng.random(orbits)
    for _ in range(burn_in):
        x = family.f(t, x)
    per_orbit = max(1, steps // orbits)
    acc = np.zeros(orbits)
    for _ in range(per_orbit):
        acc += np.log(np.abs(family.df(t, x)))
        x = family.f(t, x)
    L = float(acc.sum() / (per_orbit * orbits))
    if not L > 0:
        raise ValidationError(f"non-positive Lyapunov exponent {L} at t={t}")
    return L


def jump_S(family: MapFamily, t, density: DensityGrid):
    """S_t = s_1(t) = rho_t(c) (1/|Df_t(c-)| + 1/|Df_t(c+)|)."""
    s1 = saltus_weights(family, t, density, K_trunc=1).s1
    if not s1 > 0:
        raise ValidationError(f"non-positive density jump {s1} at t={t}")
    return s1


@dataclass(frozen=True)
class JSeries:
    value: float
    terms: int
    tail_bound: float
    # (left, right) values when the critical orbit came back to c
    one_sided: Optional[tuple] = None
    hit_index: Optional[int] = None


def _series_terms(family, t, K, first_side=None, hit=None):
    """Partial sum of v(f^k c)/Df^k(f(c)) for k < K.

    At the orbit index ``hit`` (where f^hit(c) is c up to rounding) the
    derivative is taken from ``first_side``.
    """
    c = family.c
    x = c
    deriv = 1.0
    total = 0.0
    near = None
    for k in range(K):
        total += float(family.velocity_raw(t, x)) / deriv
        x = float(family.f(t, x))
        at = x
        side = "right"
        if abs(x - c) < NEAR_PERIODIC_DIST:
            if near is None:
                near = k + 1
            if hit is not None and k + 1 == hit:
                # treat the return as landing on c, approached from first_side
                at, side = c, first_side
        deriv *= float(family.df(t, at, side=side))
    return total, near


def transversality_series(family: MapFamily, t, tol=1e-12) -> JSeries:
    """J(f_t, v_t) truncated where the geometric tail bound drops below tol."""
    family.check_t(t)
    lam, _ = family.expansion_bounds(t)
    vsup = family.velocity_sup(t)
    ratio = 1.0 / lam
    K = 1
    while vsup * ratio**K / (1.0 - ratio) >= tol:
        K += 1
    tail = vsup * ratio**K / (1.0 - ratio)
    value, near = _series_terms(family, t, K)
    if near is None:
        return JSeries(value=value, terms=K, tail_bound=tail)
    left, _ = _series_terms(family, t, K, first_side="left", hit=near)
    right, _ = _series_terms(family, t, K, first_side="right", hit=near)
    warnings.warn(
        NearPeriodicWarning(
            f"critical orbit returns within {NEAR_PERIODIC_DIST} of c at index {near} "
            f"(t={t}); one-sided J values {left!r} / {right!r}"
        ),
        stacklevel=2,
    )
    return JSeries(value=right, terms=K, tail_bound=tail, one_sided=(left, right), hit_index=near)


def transversality_J(family: MapFamily, t, tol=1e-12):
    return transversality_series(family, t, tol).value


def _autocovariances_ulam(matrix, density, centred, floor, k_max):
    w = centred * density.values
    covs = [float(np.mean(centred * w))]
    quiet = 0
    A = matrix.A
    for _ in range(1, k_max):
        w = A @ w
        ck = float(np.mean(centred * w))
        covs.append(ck)
        quiet = quiet + 1 if abs(ck) < floor else 0
        if quiet >= 5:
            break
    return np.array(covs)


def _autocovariances_midpoint(family, t, density, phi, R, floor, k_max, n_nodes):
    nodes = (np.arange(n_nodes) + 0.5) / n_nodes
    weights = density.values[np.minimum((nodes * density.n).astype(np.int64), density.n - 1)]
    weights = weights / weights.mean()
    base = phi(nodes) - R
    y = nodes
    covs = [float(np.mean(base * base * weights))]
    quiet = 0
    for _ in range(1, k_max):
        y = family.f(t, y)
        ck = float(np.mean(base * (phi(y) - R) * weights))
        covs.append(ck)
        quiet = quiet + 1 if abs(ck) < floor else 0
        if quiet >= 5:
            break
    return np.array(covs)


def green_kubo_covariances(
    family, t, density, phi, matrix=None, quadrature="ulam", noise_floor=None, k_max=20_000, n_nodes=None
):
    """C_k = int phihat (phihat o f^k) d mu_t for k = 0, 1, ... until the
    sequence stays under the noise floor for 5 consecutive lags."""
    phi = get_observable(phi)
    R = response(family, t, density, phi)
    centred = cell_values(phi, density) - R
    if not np.any(centred):
        return np.zeros(1)
    if quadrature == "ulam":
        if matrix is None:
            matrix = build_ulam(family, t, density.n)
        c0 = float(np.mean(centred * centred * density.values))
        floor = 1e-13 * c0 if noise_floor is None else noise_floor
        return _autocovariances_ulam(matrix, density, centred, floor, k_max)
    if quadrature == "midpoint":
        n_nodes = n_nodes or density.n
        c0 = float(np.mean(centred * centred * density.values))
        floor = c0 / math.sqrt(n_nodes) if noise_floor is None else noise_floor
        return _autocovariances_midpoint(family, t, density, phi, R, floor, k_max, n_nodes)
    raise ValueError(f"unknown quadrature {quadrature!r}")


def sigma_direct(family, t, phi, R, window=2000, orbits=2000, burn_in=200, seed=0):
    """Sample std of window Birkhoff sums of phi - R, scaled by window^-1/2."""
    phi = get_observable(phi)
    rng = np.random.default_rng(seed)
    lo, hi = family.support(t)
    x = lo + (hi - lo) * rng.random(orbits)
    for _ in range(burn_in):
        x = family.f(t, x)
    sums = np.zeros(orbits)
    for _ in range(window):
        sums += phi(x) - R
        x = family.f(t, x)
    return float(np.std(sums / math.sqrt(window), ddof=1))


def sigma_variance(family: MapFamily, t, density: DensityGrid, phi, mode="green_kubo", matrix=None, **kwargs):
    """sigma_t(phi).

    ``mode="green_kubo"`` (default) sums autocovariances computed on the
    grid; ``mode="direct"`` uses long-orbit window sums and exists for
    cross-validation only.  Keyword arguments go to the chosen estimator.
    """
    phi = get_observable(phi)
    if mode == "direct":
        return sigma_direct(family, t, phi, response(family, t, density, phi), **kwargs)
    if mode != "green_kubo":
        raise ValueError(f"unknown sigma mode {mode!r}")
    covs = green_kubo_covariances(family, t, density, phi, matrix=matrix, **kwargs)
    var = covs[0] + 2.0 * covs[1:].sum()
    if var < 0:
        raise VarianceError(f"negative Green-Kubo variance {var:.3e} at t={t}", covariances=covs)
    return math.sqrt(var)


@dataclass(frozen=True)
class QuantityConfig:
    n: int = 2**14
    j_tol: float = 1e-12
    sigma_mode: str = "green_kubo"
    sigma_quadrature: str = "ulam"
    sigma_threshold: float = 1e-4


@dataclass(frozen=True)
class DynQuantities:
    t: float
    L: float
    ell: float
    S: float
    J: float
    sigma: float
    psi: float
    response: float
    sigma_degenerate: bool
    provenance: dict = field(default_factory=dict)

    def to_json_dict(self):
        return asdict(self)


def dyn_quantities(
    family: MapFamily, t, phi, config: QuantityConfig = QuantityConfig(), matrix: UlamMatrix = None,
    density: DensityGrid = None,
) -> DynQuantities:
    phi = get_observable(phi)
    if matrix is None:
        matrix = build_ulam(family, t, config.n)
    if density is None:
        density = invariant_density(matrix)
    L = lyapunov(family, t, density)
    ell = 1.0 / math.sqrt(L)
    S = jump_S(family, t, density)
    J = transversality_J(family, t, config.j_tol)
    if config.sigma_mode == "green_kubo":
        sigma = sigma_variance(family, t, density, phi, matrix=matrix, quadrature=config.sigma_quadrature)
    else:
        sigma = sigma_variance(family, t, density, phi, mode=config.sigma_mode)
    R = response(family, t, density, phi)
    return DynQuantities(
        t=float(t),
        L=L,
        ell=ell,
        S=S,
        J=J,
        sigma=sigma,
        psi=sigma * S * J * ell,
        response=R,
        sigma_degenerate=bool(sigma < config.sigma_threshold),
        provenance={
            "n": density.n,
            "j_tol": config.j_tol,
            "power_tol": 1e-12,
            "sigma_mode": config.sigma_mode,
            "sigma_quadrature": config.sigma_quadrature,
            "observable": phi.name,
        },
    )
