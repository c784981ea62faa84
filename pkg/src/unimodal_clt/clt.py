"""Monte-Carlo experiments over the parameter window.

Parameters are drawn i.i.d. uniform from a counter-based (Philox) stream,
so sample i depends only on (seed, i).  Per-parameter quantities are
computed independently (optionally on a process pool); orbit sums are then
accumulated vectorised over all parameters at once.
"""
from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import special, stats

from .maps import SQRT2, family_from_spec, iterate_critical, make_family
from .quantities import QuantityConfig, dyn_quantities, get_observable
from .symbolic import n_of
from .transfer import build_ulam, density_l1_distance, invariant_density
from .wild import newton_quotient


@dataclass(frozen=True)
class CltConfig:
    family: str = "tent"
    param_min: float = 1.2
    param_max: float = 2.0
    window_min: float = 1.5
    window_max: float = 1.9
    observable: str = "identity"
    tier: str = "surrogate"
    N: int = 2000
    h: float = 1e-4
    neg_log_h: tuple = (200.0, 500.0, 1000.0, 2000.0)
    N_schedule: tuple = (100, 400, 1600, 6400)
    samples: int = 20000
    seed: int = 0
    n: int = 2**14
    n_direct: int = 2**18
    sigma_threshold: float = 1e-4
    synthetic: bool = False
    psi_override: Optional[float] = None
    threads: int = 1

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if not (self.param_min <= self.window_min < self.window_max <= self.param_max):
            raise ValueError(
                f"window [{self.window_min}, {self.window_max}] must lie inside "
                f"[{self.param_min}, {self.param_max}]"
            )
        if self.family == "tent" and self.window_min <= SQRT2:
            raise ValueError("tent windows must lie strictly above sqrt(2)")
        if self.tier not in ("surrogate", "direct"):
            raise ValueError(f"unknown tier {self.tier!r}")

    def family_spec(self):
        return {"family": self.family, "param_min": self.param_min, "param_max": self.param_max}

    def make_family(self):
        return make_family(self.family, self.param_min, self.param_max)

    def to_json_dict(self):
        d = asdict(self)
        d["neg_log_h"] = list(self.neg_log_h)
        d["N_schedule"] = list(self.N_schedule)
        return d


@dataclass(frozen=True)
class CltSample:
    """One parameter draw.  ``log_h`` is log|h| (or -N L_t in the surrogate tier)."""

    t: float
    log_h: float
    raw: float
    normalized: float

    @property
    def h_eff(self):
        return math.exp(self.log_h)


@dataclass
class SummaryStats:
    count: int
    excluded: int = 0
    mean: Optional[float] = None
    variance: Optional[float] = None
    ks: Optional[float] = None
    cdf_x: list = field(default_factory=list)
    cdf_y: list = field(default_factory=list)
    per_h: list = field(default_factory=list)
    slope: Optional[float] = None
    intercept: Optional[float] = None
    r2: Optional[float] = None
    extra: dict = field(default_factory=dict)

    def to_json_dict(self, with_cdf=False):
        d = asdict(self)
        if not with_cdf:
            d.pop("cdf_x")
            d.pop("cdf_y")
        return d


# -- statistics -------------------------------------------------------------

def normal_cdf(x):
    return 0.5 * special.erfc(-np.asarray(x, dtype=float) / math.sqrt(2.0))


def ks_distance(samples):
    """sup_y |F_emp(y) - Phi(y)| for the standard normal Phi."""
    x = np.sort(np.asarray(samples, dtype=float))
    m = x.size
    if m == 0:
        raise ValueError("KS distance of an empty sample")
    cdf = normal_cdf(x)
    above = np.arange(1, m + 1) / m - cdf
    below = cdf - np.arange(m) / m
    return float(max(above.max(), below.max()))


def empirical_cdf(samples):
    x = np.sort(np.asarray(samples, dtype=float))
    return x, np.arange(1, x.size + 1) / x.size


def summarize(values, excluded=0) -> SummaryStats:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return SummaryStats(count=0, excluded=excluded)
    x, y = empirical_cdf(values)
    return SummaryStats(
        count=int(values.size),
        excluded=int(excluded),
        mean=float(values.mean()),
        variance=float(values.var(ddof=1)) if values.size > 1 else 0.0,
        ks=ks_distance(values),
        cdf_x=x.tolist(),
        cdf_y=y.tolist(),
    )


# -- sampling and per-parameter quantities ----------------------------------

def sample_parameters(seed, count, lo, hi):
    """i-th value depends only on (seed, i): Philox counter stream."""
    u = np.random.Generator(np.random.Philox(key=int(seed))).random(count)
    return lo + (hi - lo) * u


def _quantities_task(args):
    spec, t, observable, n, threshold = args
    family = family_from_spec(spec)
    return dyn_quantities(family, t, observable, QuantityConfig(n=n, sigma_threshold=threshold))


def _direct_task(args):
    spec, t, h, observable, n_direct, n, threshold = args
    family = family_from_spec(spec)
    density = invariant_density(build_ulam(family, t, n_direct))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        q = newton_quotient(family, t, h, observable, n_direct, density_t=density)
    quants = dyn_quantities(family, t, observable, QuantityConfig(n=n, sigma_threshold=threshold))
    return q, quants, n_of(family, t, h)


def resolve_threads(threads=None):
    if threads:
        return max(1, int(threads))
    env = os.environ.get("UNIMODAL_CLT_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def parallel_map(func, items, threads=1):
    items = list(items)
    if threads <= 1 or len(items) < 2:
        return [func(it) for it in items]
    chunk = max(1, len(items) // (8 * threads))
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items, chunksize=chunk))


_QUANTITY_CACHE: dict = {}


def parameter_quantities(config: CltConfig, ts) -> list:
    """DynQuantities for every t (memoised per process)."""
    key_base = (tuple(sorted(config.family_spec().items())), config.observable, config.n, config.sigma_threshold)
    missing = [t for t in ts if (key_base, float(t)) not in _QUANTITY_CACHE]
    if missing:
        tasks = [(config.family_spec(), float(t), config.observable, config.n, config.sigma_threshold) for t in missing]
        for t, q in zip(missing, parallel_map(_quantities_task, tasks, config.threads)):
            _QUANTITY_CACHE[(key_base, float(t))] = q
    return [_QUANTITY_CACHE[(key_base, float(t))] for t in ts]


def clear_cache():
    _QUANTITY_CACHE.clear()


def orbit_sums(family, ts, R, phi, checkpoints):
    """Birkhoff sums sum_{j=1}^{N} (phi(x_j(t)) - R(t)) at each N in ``checkpoints``.

    ``checkpoints`` is either a sorted sequence of common N values (result
    shape (len(checkpoints), len(ts))) or an integer array of per-parameter
    targets with shape (rows, len(ts)).
    """
    ts = np.asarray(ts, dtype=float)
    R = np.asarray(R, dtype=float)
    targets = np.asarray(checkpoints)
    if targets.ndim == 1:
        targets = np.repeat(targets[:, None], ts.size, axis=1)
    out = np.zeros(targets.shape)
    if ts.size == 0:
        return out
    total = np.zeros(ts.size)
    top = int(targets.max())
    for j, x in enumerate(iterate_critical(family, ts, top), start=1):
        total += phi(x) - R
        hit = targets == j
        if hit.any():
            rows, cols = np.nonzero(hit)
            out[rows, cols] = total[cols]
    return out


# -- experiments -------------------------------------------------------------

def _field(qs, name):
    return np.array([getattr(q, name) for q in qs], dtype=float)


def run_surrogate_clt(config: CltConfig):
    """Normalised critical-orbit sums (1/(sigma_t sqrt N)) sum_{j<=N} (phi(x_j) - R_phi(t)).

    Parameters with sigma_t below ``sigma_threshold`` are excluded and
    counted in ``SummaryStats.excluded``.
    """
    family = config.make_family()
    phi = get_observable(config.observable)
    ts = sample_parameters(config.seed, config.samples, config.window_min, config.window_max)
    qs = parameter_quantities(config, ts)
    sigma = _field(qs, "sigma")
    keep = sigma >= config.sigma_threshold
    kt = ts[keep]
    sums = orbit_sums(family, kt, _field(qs, "response")[keep], phi, [config.N])[0]
    L = _field(qs, "L")[keep]
    normalized = sums / (sigma[keep] * math.sqrt(config.N))
    samples = [
        CltSample(float(t), float(-config.N * l), float(s), float(z)) for t, l, s, z in zip(kt, L, sums, normalized)
    ]
    stats_ = summarize(normalized, excluded=int((~keep).sum()))
    stats_.extra["N"] = config.N
    stats_.extra["degenerate_observable"] = bool(not keep.any())
    return samples, stats_


def direct_window(config: CltConfig):
    h = config.h
    lo, hi = config.window_min, config.window_max
    return (lo, hi - h) if h > 0 else (lo - h, hi)


def run_direct_clt(config: CltConfig):
    """Direct Newton quotients normalised by Psi(t) sqrt(-log|h|).

    Also compares each quotient with s_1 J times the critical-orbit sum of
    length N(t, h) (Spearman correlation and sign agreement in ``extra``).
    """
    family = config.make_family()
    phi = get_observable(config.observable)
    lo, hi = direct_window(config)
    ts = sample_parameters(config.seed, config.samples, lo, hi)
    tasks = [
        (config.family_spec(), float(t), config.h, config.observable, config.n_direct, config.n, config.sigma_threshold)
        for t in ts
    ]
    results = parallel_map(_direct_task, tasks, config.threads)
    quotients = np.array([r[0] for r in results])
    qs = [r[1] for r in results]
    Ns = np.array([max(1, r[2]) for r in results])
    psi = _field(qs, "psi")
    scale = math.sqrt(-math.log(abs(config.h)))
    degenerate = psi == 0.0
    normalized = np.where(degenerate, 0.0, quotients / np.where(degenerate, 1.0, psi * scale))
    sums = orbit_sums(family, ts, _field(qs, "response"), phi, Ns[None, :])[0]
    surrogate = _field(qs, "S") * _field(qs, "J") * sums
    log_h = math.log(abs(config.h))
    samples = [CltSample(float(t), log_h, float(q), float(z)) for t, q, z in zip(ts, quotients, normalized)]
    stats_ = summarize(normalized)
    stats_.extra["h"] = config.h
    stats_.extra["degenerate_observable"] = bool(degenerate.all())
    if np.ptp(quotients) > 0 and np.ptp(surrogate) > 0:
        stats_.extra["spearman"] = float(stats.spearmanr(quotients, surrogate).statistic)
    else:
        stats_.extra["spearman"] = None
    stats_.extra["sign_agreement"] = float(np.mean(np.sign(quotients) == np.sign(surrogate)))
    stats_.extra["surrogate"] = surrogate.tolist()
    return samples, stats_


def ks_two_sample(a, b):
    return float(stats.ks_2samp(a, b).statistic)


def _regress(x, y):
    fit = stats.linregress(x, y)
    return float(fit.slope), float(fit.intercept), float(fit.rvalue**2)


def variance_scaling(config: CltConfig):
    """Var_t of (surrogate Newton quotient)/Psi(t) against -log h.

    For each target -log h = H the orbit length is N_t = round(H / L_t);
    the quotient is S_t J_t times the length-N_t orbit sum.  With
    ``synthetic=True`` the quotients are Psi sqrt(H) Z for standardised
    Gaussian Z (Psi = ``psi_override`` or 1), a self-test of the regression.
    """
    H = np.array(sorted(set(float(v) for v in config.neg_log_h)))
    if H.size < 4:
        raise ValueError("variance scaling needs at least 4 distinct h values")
    M = config.samples
    rows = []
    samples = []
    if config.synthetic:
        psi = 1.0 if config.psi_override is None else float(config.psi_override)
        rng = np.random.Generator(np.random.Philox(key=int(config.seed)))
        ts = sample_parameters(config.seed, M, config.window_min, config.window_max)
        for Hk in H:
            z = rng.standard_normal(M)
            z = (z - z.mean()) / z.std(ddof=1)
            values = psi * math.sqrt(Hk) * z / psi
            rows.append({"neg_log_h": float(Hk), "variance": float(values.var(ddof=1)), "count": M})
            samples.extend(CltSample(float(t), -float(Hk), float(psi * v), float(v / math.sqrt(Hk))) for t, v in zip(ts, values))
    else:
        family = config.make_family()
        phi = get_observable(config.observable)
        ts = sample_parameters(config.seed, M, config.window_min, config.window_max)
        qs = parameter_quantities(config, ts)
        sigma = _field(qs, "sigma")
        keep = sigma >= config.sigma_threshold
        kt = ts[keep]
        L = _field(qs, "L")[keep]
        psi = _field(qs, "psi")[keep]
        if config.psi_override is not None:
            psi = np.full(psi.shape, float(config.psi_override))
        SJ = (_field(qs, "S") * _field(qs, "J"))[keep]
        targets = np.maximum(1, np.rint(H[:, None] / L[None, :])).astype(np.int64)
        sums = orbit_sums(family, kt, _field(qs, "response")[keep], phi, targets)
        for k, Hk in enumerate(H):
            values = SJ * sums[k] / psi
            rows.append({"neg_log_h": float(Hk), "variance": float(values.var(ddof=1)), "count": int(keep.sum())})
            samples.extend(
                CltSample(float(t), -float(Hk), float(sj * s), float(v / math.sqrt(Hk)))
                for t, sj, s, v in zip(kt, SJ, sums[k], values)
            )
    slope, intercept, r2 = _regress(H, [r["variance"] for r in rows])
    out = SummaryStats(count=M, per_h=rows, slope=slope, intercept=intercept, r2=r2)
    if not config.synthetic:
        out.excluded = int((~keep).sum())
        out.count = int(keep.sum())
    return samples, out


def lipschitz_probe(config: CltConfig):
    """max_t |surrogate Newton quotient| along the orbit-length schedule.

    The quotient at length N is S_t J_t sum_{j<=N} (phi(x_j) - R_phi(t)).
    A Lipschitz R_phi would keep these maxima bounded; the CLT predicts
    growth like sqrt(N).
    """
    Ns = sorted(int(v) for v in config.N_schedule)
    if len(Ns) < 2:
        raise ValueError("need at least two orbit lengths")
    M = config.samples
    ts = sample_parameters(config.seed, M, config.window_min, config.window_max)
    if config.synthetic:
        rng = np.random.Generator(np.random.Philox(key=int(config.seed)))
        quotients = np.array([math.sqrt(N) * rng.standard_normal(M) for N in Ns])
    else:
        family = config.make_family()
        phi = get_observable(config.observable)
        qs = parameter_quantities(config, ts)
        sums = orbit_sums(family, ts, _field(qs, "response"), phi, Ns)
        quotients = (_field(qs, "S") * _field(qs, "J"))[None, :] * sums
    maxima = np.abs(quotients).max(axis=1)
    degenerate = bool(np.all(maxima == 0.0))
    expected = math.sqrt(Ns[-1] / Ns[0])
    ratio = float(maxima[-1] / maxima[0]) if maxima[0] > 0 else None
    rows = [{"N": N, "max_abs_quotient": float(m)} for N, m in zip(Ns, maxima)]
    report = {
        "rows": rows,
        "monotone": bool(np.all(np.diff(maxima) >= 0)) and not degenerate,
        "ratio": ratio,
        "expected_ratio": expected,
        "within_50pct": ratio is not None and abs(ratio / expected - 1.0) <= 0.5,
        "grows": ratio is not None and ratio > 1.0,
        "degenerate": degenerate,
    }
    samples = [
        CltSample(float(t), float(-N), float(q), float(q / math.sqrt(N)))
        for N, row in zip(Ns, quotients)
        for t, q in zip(ts, row)
    ]
    return samples, report


def modulus_experiment(family, t, hs, n=2**16):
    """||rho_{t+h} - rho_t||_1 / (|h| (log(1/|h|) + 1)) along a schedule of h."""
    for h in hs:
        if h == 0:
            raise ValueError("h = 0 is not a valid step")
        if abs(h) < 1e-3:
            raise ValueError(f"|h| = {abs(h)} is below the grid-resolvable floor 1e-3")
        family.check_t(t + h)
    base = invariant_density(build_ulam(family, t, n))
    rows = []
    for h in hs:
        other = invariant_density(build_ulam(family, t + h, n), start=base.values)
        dist = density_l1_distance(base, other)
        rows.append({"h": float(h), "l1": dist, "ratio": dist / (abs(h) * (math.log(1.0 / abs(h)) + 1.0))})
    return rows


def modulus_spread(rows):
    ratios = [r["ratio"] for r in rows]
    return max(ratios) / min(ratios)
