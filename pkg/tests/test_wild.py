import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from unimodal_clt.errors import DomainError
from unimodal_clt.maps import TentFamily, critical_orbit, eval_map
from unimodal_clt.quantities import get_observable, response, transversality_J
from unimodal_clt.symbolic import n_of
from unimodal_clt.transfer import build_ulam, invariant_density, saltus_weights
from unimodal_clt.wild import (
    birkhoff_surrogate,
    n3_estimate,
    newton_quotient,
    spike_propagate,
    straddle_depths,
    wild_integral,
)


@pytest.fixture(scope="module")
def d2():
    return invariant_density(build_ulam(TentFamily(), 2.0, 2**12))


@given(st.floats(1.5, 1.9), st.floats(-8, -3), st.integers(0, 15))
def test_spike_width_growth(t, logh, k):
    fam = TentFamily()
    h = 10.0**logh
    sp = spike_propagate(fam, t, h, k)
    w = sp.widths
    # before straddling each step multiplies the width by the slope of f_{t+h}
    np.testing.assert_allclose(w[1:], w[:-1] * (t + h), rtol=1e-6)
    assert w[0] <= fam.velocity_sup(t) * h * (1 + 1e-9)


def test_spike_example(tent):
    sp = spike_propagate(tent, 1.9, 1e-6, 0)
    assert sp.straddle_depth is not None and sp.straddle_depth >= 1
    assert sp.widths[0] <= 0.5 * 1e-6 * (1 + 1e-9)
    assert sp.mass == pytest.approx(0.5, rel=1e-6)


@given(st.floats(1.5, 1.9), st.floats(-9, -3), st.integers(0, 10))
def test_spike_recomputation(t, logh, k):
    fam = TentFamily()
    h = 10.0**logh
    sp = spike_propagate(fam, t, h, k)
    y = 0.5
    for _ in range(k):
        y = eval_map(fam, t, y)
    a, b = eval_map(fam, t + h, y), eval_map(fam, t, y)
    for row in sp.endpoints:
        assert row[0] == a and row[1] == b
        a, b = eval_map(fam, t + h, a), eval_map(fam, t + h, b)


def test_spike_orientation_symmetry(tent):
    rng = np.random.default_rng(1)
    diffs = []
    for _ in range(1000):
        t = rng.uniform(1.5, 1.9)
        k = int(rng.integers(0, 10))
        h = 10 ** rng.uniform(-10, -4)
        up, down = spike_propagate(tent, t, h, k), spike_propagate(tent, t, -h, k)
        assert np.sign(up.endpoints[0, 0] - up.endpoints[0, 1]) == -np.sign(down.endpoints[0, 0] - down.endpoints[0, 1])
        diffs.append(up.straddle_depth - down.straddle_depth)
    diffs = np.array(diffs, dtype=float)
    assert abs(diffs.mean()) <= 3 * diffs.std() / math.sqrt(diffs.size)


def test_spike_degenerate_at_t2(tent):
    for k in (1, 2, 5):
        sp = spike_propagate(tent, 2.0, -1e-6, k)
        assert sp.degenerate and sp.straddle_depth is None


def test_spike_errors(tent):
    with pytest.raises(ValueError):
        spike_propagate(tent, 1.8, 0.0, 0)
    with pytest.raises(ValueError):
        spike_propagate(tent, 1.8, 1e-6, -1)
    with pytest.raises(DomainError):
        spike_propagate(tent, 1.999, 1e-2, 0)


def test_n3_t2_first_spike(tent):
    for h in (-1e-4, -1e-8):
        N = n_of(tent, 2.0, h)
        d0 = spike_propagate(tent, 2.0, h, 0, depth_cap=N + 1).straddle_depth
        assert n3_estimate(tent, 2.0, h) == min(N, d0)


def test_n3_scale():
    fam = TentFamily()
    rng = np.random.default_rng(11)
    ok = 0
    for t in rng.uniform(1.5, 1.9, 1000):
        N = n_of(fam, t, 1e-8)
        n3 = n3_estimate(fam, t, 1e-8)
        assert 0 <= n3 <= N
        ok += (N - n3) <= 5 * math.log(N)
    assert ok >= 900


def test_straddle_depths_capped(tent):
    depths = straddle_depths(tent, 2.0, -1e-6, 4, depth_cap=30)
    assert depths[1:] == [30, 30, 30]


def test_wild_constant_is_zero(tent):
    rng = np.random.default_rng(5)
    for t in rng.uniform(1.5, 1.9, 20):
        d = invariant_density(build_ulam(tent, t, 2**10))
        assert wild_integral(tent, t, 1e-8, "constant", d) == 0.0


@pytest.mark.parametrize("h", [-1e-4, -1e-6, -1e-8, -1e-10, -1e-12])
def test_wild_t2_reduction(tent, d2, h):
    phi = get_observable("identity")
    s = saltus_weights(tent, 2.0, d2)
    d0 = spike_propagate(tent, 2.0, h, 0, depth_cap=2 * n_of(tent, 2.0, h) + 10).straddle_depth
    R = response(tent, 2.0, d2, phi)
    orbit = critical_orbit(tent, 2.0, d0)
    reduced = s.s1 * 0.5 * float(np.sum(orbit - R))
    w = wild_integral(tent, 2.0, h, phi, d2)
    assert w == pytest.approx(reduced, rel=1e-12, abs=1e-15)
    J = transversality_J(tent, 2.0)
    resid = w / (s.s1 * J) - birkhoff_surrogate(tent, 2.0, d0, phi, d2)
    assert abs(resid) < 2


def test_birkhoff_examples(tent, d2):
    assert birkhoff_surrogate(tent, 2.0, 4, "identity", d2) == pytest.approx(-1.0, abs=1e-12)
    assert birkhoff_surrogate(tent, 2.0, 7, "constant", d2) == 0.0
    with pytest.raises(ValueError):
        birkhoff_surrogate(tent, 2.0, 0, "identity", d2)


@given(st.floats(1.5, 1.9), st.integers(1, 200), st.floats(0.1, 5), st.floats(-5, 5))
def test_birkhoff_properties(t, N, a, b):
    fam = TentFamily()
    d = invariant_density(build_ulam(fam, t, 256))
    phi = get_observable("cosine")
    base = birkhoff_surrogate(fam, t, N, phi, d)
    R = response(fam, t, d, phi)
    nxt = birkhoff_surrogate(fam, t, N + 1, phi, d, R=R)
    x = critical_orbit(fam, t, N + 1)[-1]
    assert nxt - birkhoff_surrogate(fam, t, N, phi, d, R=R) == pytest.approx(float(phi(x)) - R, abs=1e-12)
    assert birkhoff_surrogate(fam, t, N, phi.affine(1.0, b), d) == pytest.approx(base, abs=1e-9)
    assert birkhoff_surrogate(fam, t, N, phi.affine(a), d) == pytest.approx(a * base, abs=1e-9)


def test_newton_quotient_basics(tent):
    assert newton_quotient(tent, 1.8, 1e-3, "constant", 2**12) == 0.0
    phi = get_observable("square")
    base = newton_quotient(tent, 1.8, 1e-3, phi, 2**14)
    assert newton_quotient(tent, 1.8, 1e-3, phi.affine(3.0, -2.0), 2**14) == pytest.approx(3 * base, abs=1e-10)


def test_newton_quotient_guards(tent):
    with pytest.raises(ValueError):
        newton_quotient(tent, 1.8, 1e-7, "identity", 2**18)
    with pytest.raises(ValueError):
        newton_quotient(tent, 1.8, 1e-5, "identity", 2**16)
    with pytest.raises(DomainError):
        newton_quotient(tent, 1.99, 0.05, "identity", 2**12)
    with pytest.raises(ValueError):
        newton_quotient(tent, 1.8, 0.0, "identity", 2**12)
    with pytest.warns(RuntimeWarning):
        newton_quotient(tent, 1.8, 5e-5, "identity", 2**17)


def test_newton_quotient_grid_stability(tent):
    a = newton_quotient(tent, 1.9, 1e-3, "identity", 2**17)
    b = newton_quotient(tent, 1.9, 1e-3, "identity", 2**18)
    assert abs(a - b) <= 0.1 * abs(b)
