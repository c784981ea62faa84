import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from unimodal_clt.clt import (
    CltConfig,
    empirical_cdf,
    ks_distance,
    ks_two_sample,
    lipschitz_probe,
    modulus_experiment,
    normal_cdf,
    orbit_sums,
    resolve_threads,
    run_direct_clt,
    run_surrogate_clt,
    sample_parameters,
    variance_scaling,
)
from unimodal_clt.maps import TentFamily, critical_orbit
from unimodal_clt.quantities import QuantityConfig, dyn_quantities, get_observable


def test_ks_examples():
    assert ks_distance([0.0]) == 0.5
    M = 1000
    q = stats.norm.ppf((np.arange(1, M + 1) - 0.5) / M)
    assert ks_distance(q) <= 1 / (2 * M) + 1e-6
    assert ks_distance(np.full(10, 10.0)) >= 0.999
    with pytest.raises(ValueError):
        ks_distance([])


@given(st.lists(st.floats(-6, 6), min_size=1, max_size=300))
def test_ks_matches_scipy(xs):
    assert ks_distance(xs) == pytest.approx(stats.kstest(xs, "norm").statistic, abs=1e-12)


def test_normal_cdf():
    assert normal_cdf(0.0) == 0.5
    np.testing.assert_allclose(normal_cdf([-2.0, 1.0]), stats.norm.cdf([-2.0, 1.0]), rtol=1e-14)


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=100))
def test_empirical_cdf(xs):
    x, y = empirical_cdf(xs)
    assert np.all(np.diff(x) >= 0) and np.all(np.diff(y) > 0)
    assert y[-1] == 1.0 and y[0] > 0


def test_config_validation():
    with pytest.raises(ValueError):
        CltConfig(window_min=1.3, window_max=1.9)
    with pytest.raises(ValueError):
        CltConfig(window_min=1.5, window_max=2.1)
    with pytest.raises(ValueError):
        CltConfig(tier="other")
    with pytest.raises(ValueError):
        CltConfig(samples=0)


def test_sampling_is_counter_based():
    long = sample_parameters(9, 1000, 1.5, 1.9)
    np.testing.assert_array_equal(long[:10], sample_parameters(9, 10, 1.5, 1.9))
    assert np.all((long >= 1.5) & (long < 1.9))
    assert not np.array_equal(long[:10], sample_parameters(10, 10, 1.5, 1.9))


def test_resolve_threads(monkeypatch):
    monkeypatch.setenv("UNIMODAL_CLT_THREADS", "3")
    assert resolve_threads(None) == 3
    assert resolve_threads(2) == 2
    monkeypatch.delenv("UNIMODAL_CLT_THREADS")
    assert resolve_threads(None) >= 1


def test_orbit_sums_match_direct():
    fam = TentFamily()
    ts = np.array([1.55, 1.8])
    R = np.array([0.3, 0.4])
    out = orbit_sums(fam, ts, R, get_observable("identity"), [3, 10])
    for k, t in enumerate(ts):
        orb = critical_orbit(fam, t, 10)
        assert out[0, k] == pytest.approx(np.sum(orb[:3] - R[k]), abs=1e-14)
        assert out[1, k] == pytest.approx(np.sum(orb - R[k]), abs=1e-13)
    per = orbit_sums(fam, ts, R, get_observable("identity"), np.array([[2, 5]]))
    assert per[0, 1] == pytest.approx(np.sum(critical_orbit(fam, 1.8, 5) - 0.4), abs=1e-14)


def test_single_sample_single_term():
    cfg = CltConfig(samples=1, N=1, seed=4, n=2**12)
    samples, st_ = run_surrogate_clt(cfg)
    (s,) = samples
    q = dyn_quantities(TentFamily(), s.t, "identity", QuantityConfig(n=2**12))
    expected = (critical_orbit(TentFamily(), s.t, 1)[0] - q.response) / q.sigma
    assert s.normalized == pytest.approx(expected, rel=1e-12)
    assert math.isfinite(s.normalized)
    assert s.log_h == pytest.approx(-q.L)


def test_constant_observable_excluded():
    samples, st_ = run_surrogate_clt(CltConfig(samples=100, N=50, observable="constant", n=2**10))
    assert samples == [] and st_.excluded == 100 and st_.count == 0
    assert st_.extra["degenerate_observable"]


def test_surrogate_accounting_and_determinism():
    cfg = CltConfig(samples=150, N=200, seed=2, n=2**12)
    a, sa = run_surrogate_clt(cfg)
    b, sb = run_surrogate_clt(cfg)
    assert a == b
    assert sa.count + sa.excluded == 150
    assert np.all(np.diff(sa.cdf_y) > 0) and 0 < sa.cdf_y[0] and sa.cdf_y[-1] == 1.0
    assert 0 <= sa.ks <= 1


def test_surrogate_affine_invariance():
    phi = get_observable("square")
    base, _ = run_surrogate_clt(CltConfig(samples=40, N=300, seed=8, n=2**12, observable=phi))
    other, _ = run_surrogate_clt(CltConfig(samples=40, N=300, seed=8, n=2**12, observable=phi.affine(2.5, -0.7)))
    for a, b in zip(base, other):
        assert b.normalized == pytest.approx(a.normalized, abs=1e-10)


def test_ks_improves_with_N():
    ks = [run_surrogate_clt(CltConfig(samples=1000, N=N, seed=5))[1].ks for N in (50, 2000)]
    assert ks[1] < ks[0]


def test_variance_scaling_synthetic():
    _, st_ = variance_scaling(CltConfig(samples=2000, synthetic=True, psi_override=0.7))
    assert st_.slope == pytest.approx(1.0, abs=1e-2)
    with pytest.raises(ValueError):
        variance_scaling(CltConfig(samples=100, neg_log_h=(100.0, 200.0, 300.0)))


def test_variance_scaling_scale_invariant():
    phi = get_observable("identity")
    _, a = variance_scaling(CltConfig(samples=150, seed=1, n=2**12, neg_log_h=(50.0, 100.0, 150.0, 200.0), observable=phi))
    _, b = variance_scaling(
        CltConfig(samples=150, seed=1, n=2**12, neg_log_h=(50.0, 100.0, 150.0, 200.0), observable=phi.affine(2.0))
    )
    for ra, rb in zip(a.per_h, b.per_h):
        assert rb["variance"] == pytest.approx(ra["variance"], rel=1e-9)


def test_lipschitz_degenerate_and_synthetic():
    _, rep = lipschitz_probe(CltConfig(samples=100, observable="constant", n=2**10))
    assert rep["degenerate"] and not rep["monotone"]
    _, rep = lipschitz_probe(CltConfig(samples=10000, synthetic=True, seed=3))
    assert rep["ratio"] == pytest.approx(8.0, rel=0.3)
    with pytest.raises(ValueError):
        lipschitz_probe(CltConfig(samples=100, N_schedule=(100,)))


def test_direct_constant_observable():
    cfg = CltConfig(tier="direct", samples=3, h=1e-3, n_direct=2**12, n=2**10, observable="constant")
    samples, st_ = run_direct_clt(cfg)
    assert all(s.raw == 0.0 for s in samples)
    assert st_.ks == pytest.approx(0.5)
    assert st_.extra["degenerate_observable"]


def test_direct_window_keeps_t_plus_h_inside():
    cfg = CltConfig(tier="direct", samples=4, h=-1e-3, n_direct=2**12, n=2**10, window_min=1.5, window_max=1.9)
    samples, _ = run_direct_clt(cfg)
    assert all(1.5 <= s.t + cfg.h and s.t <= 1.9 for s in samples)


def test_modulus_guards():
    fam = TentFamily()
    with pytest.raises(ValueError):
        modulus_experiment(fam, 1.9, [0.0], n=2**10)
    with pytest.raises(ValueError):
        modulus_experiment(fam, 1.9, [1e-4], n=2**10)
    rows = modulus_experiment(fam, 1.9, [1e-1, 1e-2], n=2**12)
    assert all(r["ratio"] > 0 for r in rows)


def test_ks_two_sample():
    x = np.linspace(-1, 1, 50)
    assert ks_two_sample(x, x) == 0.0
