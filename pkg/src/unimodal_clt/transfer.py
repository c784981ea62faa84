"""Ulam discretisation of the transfer operator and tools built on it.

Densities live on a uniform grid of ``n`` cells over [0, 1] (``n`` even, so
that c = 1/2 is a cell boundary for the tent family).  The Ulam matrix is
column stochastic: entry (i, j) is the fraction of cell j whose image lands
in cell i.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import ConstructionError, ConvergenceError, SpectralError
from .maps import MapFamily, critical_orbit

POWER_TOL = 1e-12
POWER_MAX_ITER = 100_000


@dataclass(frozen=True)
class DensityGrid:
    """Cell averages of a probability density on a uniform grid."""

    values: np.ndarray
    support: tuple
    t: Optional[float] = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n(self):
        return self.values.size

    @property
    def width(self):
        return 1.0 / self.n

    @property
    def edges(self):
        return np.arange(self.n + 1) / self.n

    @property
    def midpoints(self):
        return (np.arange(self.n) + 0.5) / self.n

    def mass_outside_support(self):
        lo, hi = self.support
        left = np.arange(self.n) / self.n
        right = left + self.width
        outside = (right <= lo) | (left >= hi)
        return float(self.values[outside].sum() / self.n)

    def to_csv(self, stream=None):
        """Write ``cell_index,left_edge,value`` rows with 17 significant digits."""
        own = stream is None
        out = io.StringIO() if own else stream
        out.write("cell_index,left_edge,value\n")
        for i, (x, v) in enumerate(zip(np.arange(self.n) / self.n, self.values)):
            out.write(f"{i},{x:.17g},{v:.17g}\n")
        return out.getvalue() if own else None

    @classmethod
    def from_csv(cls, text, support=(0.0, 1.0), t=None):
        rows = [line.split(",") for line in text.strip().splitlines()[1:]]
        return cls(np.array([float(r[2]) for r in rows]), tuple(support), t)


@dataclass(frozen=True)
class UlamMatrix:
    A: sp.csr_matrix
    t: float
    support: tuple
    lam: float = 2.0

    @property
    def n(self):
        return self.A.shape[0]


@dataclass(frozen=True)
class SaltusModel:
    """Jump locations f_t^k(c) and weights s_k(t), k = 1..K."""

    locations: np.ndarray
    weights: np.ndarray
    rho_c: float
    flagged: bool = False

    @property
    def entries(self):
        return list(zip(self.locations.tolist(), self.weights.tolist()))

    @property
    def s1(self):
        return float(self.weights[0])

    def cell_averages(self, n, count=None):
        """Cell averages of sum_k s_k H_{x_k} with H_a = -1 on [a, 1]."""
        k = len(self.weights) if count is None else count
        left = np.arange(n) / n
        out = np.zeros(n)
        for loc, w in zip(self.locations[:k], self.weights[:k]):
            # fraction of each cell lying right of loc
            frac = np.clip((left + 1.0 / n - loc) * n, 0.0, 1.0)
            out -= w * frac
        return out


def build_ulam(family: MapFamily, t, n) -> UlamMatrix:
    """Column-stochastic Ulam matrix of f_t on ``n`` uniform cells.

    Each target cell's preimage under each branch is computed exactly (from
    the inverse branch), then intersected with the source cells.
    """
    if n < 16 or n % 2:
        raise ValueError(f"grid size must be even and >= 16, got {n}")
    family.check_t(t)
    lam, _ = family.expansion_bounds(t)
    if lam <= 1.0:
        raise ConstructionError(f"f_t is not expanding at t={t}: inf|Df| = {lam}")
    top = family.critical_value(t)
    y = np.minimum(np.arange(n + 1) / n, top)
    rows, cols, vals = [], [], []
    target = np.arange(n)
    for branch in ("left", "right"):
        p = family.inverse(t, y, branch)
        lo = np.minimum(p[:-1], p[1:])
        hi = np.maximum(p[:-1], p[1:])
        j0 = np.minimum(np.floor(lo * n).astype(np.int64), n - 1)
        # preimages are shorter than one cell, so two source cells suffice
        for off in (0, 1):
            j = j0 + off
            valid = j < n
            jc = np.minimum(j, n - 1)
            ov = np.minimum(hi, (jc + 1) / n) - np.maximum(lo, jc / n)
            keep = valid & (ov > 0)
            rows.append(target[keep])
            cols.append(jc[keep])
            vals.append(ov[keep] * n)
    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsc()
    # the overlaps of each column partition one cell; remove rounding drift
    sums = np.asarray(A.sum(axis=0)).ravel()
    A = (A @ sp.diags(1.0 / np.where(sums > 0, sums, 1.0))).tocsr()
    return UlamMatrix(A=A, t=float(t), support=family.support(t), lam=float(lam))


def invariant_density(matrix: UlamMatrix, tol=POWER_TOL, max_iter=POWER_MAX_ITER, start=None) -> DensityGrid:
    """Fixed point of the Ulam matrix by power iteration, normalised to mean 1."""
    n = matrix.n
    rho = np.ones(n) if start is None else np.array(start, dtype=float)
    rho *= n / rho.sum()
    A = matrix.A
    change = math.inf
    for it in range(1, max_iter + 1):
        nxt = A @ rho
        nxt *= n / nxt.sum()
        change = float(np.abs(nxt - rho).mean())
        rho = nxt
        if change < tol:
            return DensityGrid(rho, matrix.support, matrix.t)
    raise ConvergenceError(
        f"power iteration did not converge in {max_iter} steps (last L1 change {change:.3e})",
        residual=change,
        iterations=max_iter,
    )


def apply_transfer(matrix: UlamMatrix, g):
    g = np.asarray(g, dtype=float)
    if g.shape != (matrix.n,):
        raise ValueError(f"vector of length {g.shape} does not match grid of {matrix.n} cells")
    return matrix.A @ g


def l1(g):
    """L1 norm under normalised Lebesgue measure."""
    return float(np.abs(g).mean())


def variation(g):
    """Discrete total variation of a cell-value vector."""
    return float(np.abs(np.diff(g)).sum())


def project_zero_mean(g, density: DensityGrid):
    """g - rho_t * int g dm."""
    g = np.asarray(g, dtype=float)
    return g - density.values * g.mean()


def resolvent_zero_mean(matrix: UlamMatrix, g, tol=1e-10, density=None, burn_in=None, max_terms=1_000_000):
    """(I - A)^{-1} applied to the zero-mean projection of ``g``.

    Neumann summation.  With r_m = sum_{i<m} A^i g' the defect
    (I - A) r_m - g' equals -A^m g', so the loop stops once that term is
    below ``tol`` and the geometric tail implied by the observed contraction
    ratio (last 10 terms) is below ``tol`` as well.

    The default burn-in covers the ~log(n)/log(lam) steps a one-cell spike
    needs before the expansion spreads it over the whole support.
    """
    if burn_in is None:
        burn_in = 2 * math.ceil(math.log(matrix.n) / math.log(matrix.lam)) + 20
    if tol <= 0:
        raise ValueError("tol must be positive")
    if density is None:
        density = invariant_density(matrix)
    g = np.asarray(g, dtype=float)
    if g.shape != (matrix.n,):
        raise ValueError("vector length does not match grid")
    term = project_zero_mean(g, density)
    r = np.zeros_like(term)
    norms = []
    A = matrix.A
    for m in range(max_terms):
        size = l1(term)
        norms.append(size)
        if size == 0.0:
            return r
        q = None
        if m >= max(burn_in, 10) and norms[-11] > 0:
            q = (size / norms[-11]) ** 0.1
            if q >= 1.0:
                raise SpectralError(f"Neumann series not contracting (ratio {q:.4f})", contraction=q)
        if size <= tol and (q is not None and size * q / (1.0 - q) <= tol):
            return r
        r += term
        term = A @ term
    raise ConvergenceError("Neumann series did not converge", residual=norms[-1], iterations=max_terms)


def default_truncation(lam):
    """Smallest K with lam^-K < 1e-12."""
    return int(math.floor(12.0 * math.log(10.0) / math.log(lam))) + 1


def density_at_c(density: DensityGrid, c):
    """rho_t(c): average of the two adjacent cells when c is a cell boundary."""
    n = density.n
    pos = c * n
    k = int(round(pos))
    if abs(pos - k) < 1e-9 and 0 < k < n:
        left, right = density.values[k - 1], density.values[k]
        jump = abs(left - right) > 0.05 * max(left, right, 1e-300)
        return 0.5 * (left + right), bool(jump)
    return float(density.values[min(int(pos), n - 1)]), False


def saltus_weights(family: MapFamily, t, density: DensityGrid, K_trunc=None) -> SaltusModel:
    """Jump model of rho_t: s_1 from rho_t(c) and the one-sided slopes at c,
    s_k = s_1 / Df_t^{k-1}(f_t(c)) at the locations f_t^k(c)."""
    lam, _ = family.expansion_bounds(t)
    if K_trunc is None:
        K_trunc = default_truncation(lam)
    if K_trunc < 1:
        raise ValueError("K_trunc must be >= 1")
    c = family.c
    rho_c, flagged = density_at_c(density, c)
    dl = abs(float(family.df(t, c, side="left")))
    dr = abs(float(family.df(t, c, side="right")))
    s1 = rho_c / dl + rho_c / dr
    locs = critical_orbit(family, t, K_trunc)
    weights = np.empty(K_trunc)
    weights[0] = s1
    deriv = 1.0
    for k in range(1, K_trunc):
        deriv *= float(family.df(t, locs[k - 1], side="right"))
        weights[k] = s1 / deriv
    return SaltusModel(locations=locs, weights=weights, rho_c=float(rho_c), flagged=flagged)


def saltus_residual_variation(density: DensityGrid, saltus: SaltusModel, count=None):
    """Total variation of the finite-difference derivative of rho - jumps."""
    smooth = density.values - saltus.cell_averages(density.n, count)
    deriv = np.diff(smooth) * density.n
    return variation(deriv)


def density_l1_distance(d1: DensityGrid, d2: DensityGrid):
    if d1.n != d2.n:
        raise ValueError(f"grid mismatch: {d1.n} vs {d2.n} cells")
    return l1(d1.values - d2.values)


@dataclass(frozen=True)
class LasotaYorkeReport:
    C6: float
    beta: float
    C5: float
    margin: float
    constant_image_variation: float
    constant_image_bound: float
    trials: int


def lasota_yorke_probe(matrix: UlamMatrix, trials=20, k_max=40, seed=0) -> LasotaYorkeReport:
    """Fit var(A^k g) <= C6 beta^k var(g) + C5 |g|_1 over random BV inputs.

    Inputs are single-cell spikes and Heaviside steps at random positions.
    C5 is the largest late-time ratio var(A^k g)/|g|_1, beta and C6 come
    from the upper envelope of the remaining excess.  ``margin`` is the
    smallest slack of the fitted inequality over all trials and k.
    """
    if trials < 10:
        raise ValueError("need at least 10 trials")
    rng = np.random.default_rng(seed)
    n = matrix.n
    A = matrix.A
    histories = []
    for i in range(trials):
        g = np.zeros(n)
        pos = int(rng.integers(0, n))
        if i % 2 == 0:
            g[pos] = n
        else:
            g[pos:] = 1.0
        vs = [variation(g)]
        size = l1(g)
        h = g
        for _ in range(k_max):
            h = A @ h
            vs.append(variation(h))
        histories.append((np.array(vs), size))

    late = slice(k_max // 2, None)
    C5 = max(float((vs[late] / size).max()) for vs, size in histories)
    excess = np.array([np.maximum(vs - C5 * size, 0.0) / vs[0] for vs, size in histories])
    envelope = excess.max(axis=0)
    ks = np.arange(k_max + 1)
    pos = envelope > 0
    if pos.sum() >= 2:
        slope = np.polyfit(ks[pos], np.log(envelope[pos]), 1)[0]
        beta = float(min(math.exp(slope), 1.0 - 1e-12))
    else:
        beta = 0.0
    beta = max(beta, 1e-12)
    C6 = float(max((envelope / beta**ks).max(), 1.0))
    margin = min(
        float((C6 * beta**ks * vs[0] + C5 * size - vs).min()) for vs, size in histories
    )
    ones_image = A @ np.ones(n)
    bound = sum(_column_variations(A, n))
    return LasotaYorkeReport(
        C6=C6,
        beta=beta,
        C5=C5,
        margin=margin,
        constant_image_variation=variation(ones_image),
        constant_image_bound=bound,
        trials=trials,
    )


def _column_variations(A, n):
    """Discrete total variation of every column of a sparse matrix."""
    A_csc = A.tocsc()
    A_csc.sort_indices()
    out = np.zeros(n)
    for j in range(n):
        start, stop = A_csc.indptr[j], A_csc.indptr[j + 1]
        rows = A_csc.indices[start:stop]
        vals = A_csc.data[start:stop]
        if rows.size == 0:
            continue
        adjacent = np.diff(rows) == 1
        inner = np.where(adjacent, np.abs(np.diff(vals)), vals[:-1] + vals[1:]).sum()
        first = vals[0] if rows[0] > 0 else 0.0
        last = vals[-1] if rows[-1] < n - 1 else 0.0
        out[j] = inner + first + last
    return out
