import math

import numpy as np
import pytest

from hawkes_cascade.errors import NumericalError
from hawkes_cascade.model import ClippedLinear, Constant, NetworkModel, PopulationParams, RngStream, \
    expm_action, paper_model
from hawkes_cascade.pdmp import (
    BoundKind,
    adaptive_window,
    critical_points,
    global_bound,
    local_bound,
    poly_real_roots,
    replay_path,
    thinning_simulate,
)


def identity_rate_model(eta1=1, nu1=1.0, eta2=2, nu2=2.0):
    # a linear rate with unit slope and a huge cap makes f(x) = 1 + x for x > 0,
    # so the bound's argument can be read off directly
    lin = ClippedLinear(1.0, 1.0, 1e6)
    return NetworkModel((PopulationParams(eta1, nu1, -1, 10, lin), PopulationParams(eta2, nu2, 1, 10, lin)))


def main_flow(model, k, x, ts):
    i = model.block(k).start
    return np.array([expm_action(model, t, x)[i] for t in ts])


# ----------------------------------------------------------------- roots


def test_poly_roots_examples():
    assert poly_real_roots([1, -1], (0, 2)) == pytest.approx([1.0])
    assert poly_real_roots([-6, 11, -6, 1], (0, 2.5)) == pytest.approx([1.0, 2.0])
    assert poly_real_roots([5], (0, 10)) == []
    assert poly_real_roots([0, 0, 0], (0, 10)) == []


def test_poly_roots_against_numpy():
    gen = np.random.default_rng(0)
    for _ in range(200):
        deg = int(gen.integers(1, 9))
        roots = np.sort(gen.uniform(-3, 3, deg))
        coeffs = np.polynomial.polynomial.polyfromroots(roots)
        got = poly_real_roots(coeffs, (0.0, 2.0))
        want = [r for r in roots if 0 < r < 2]
        # nearly double roots may merge; distinct, well separated ones must all appear
        if np.min(np.diff(roots), initial=1.0) > 1e-3 and all(min(abs(r), abs(r - 2)) > 1e-6 for r in roots):
            assert got == pytest.approx(want, abs=1e-7)
        for r in got:
            assert abs(np.polynomial.polynomial.polyval(r, coeffs)) <= 1e-8 * np.abs(coeffs).max()


def test_critical_points_examples():
    m = identity_rate_model(eta1=1, nu1=1.0)
    x = np.array([0.0, 1.0, 0.0, 0.0, 0.0])
    assert critical_points(m, 1, x, 2.0) == pytest.approx([1.0])
    assert critical_points(m, 1, x, 0.5) == []
    assert critical_points(m, 1, m.zeros(), 2.0) == []
    assert critical_points(m, 1, np.array([1.0, 0.0, 0, 0, 0]), 5.0) == []
    with pytest.raises(ValueError):
        critical_points(m, 1, x, 0.0)


# ----------------------------------------------------------------- bounds


def test_global_bound_examples():
    m = identity_rate_model(eta2=2, nu2=2.0)
    x = np.zeros(m.kappa)
    x[m.block(2)] = [2.0, 3.0, 0.0]
    assert global_bound(m, 2, x) == pytest.approx(1.0 + 2.0)
    ts = np.linspace(0, 50, 20001)
    assert main_flow(m, 2, x, ts).max() <= 2.0 + 1e-12
    assert global_bound(m, 2, m.zeros()) == pytest.approx(1.0)
    x[m.block(2)] = [-1.0, -2.0, -3.0]
    assert global_bound(m, 2, x) == pytest.approx(1.0)


def test_local_bound_example():
    m = identity_rate_model(eta1=1, nu1=1.0)
    x = np.array([0.0, 1.0, 0.0, 0.0, 0.0])
    assert local_bound(m, 1, x, 2.0) == pytest.approx(1.0 + math.exp(-1.0), rel=1e-12)
    assert local_bound(m, 1, m.zeros(), 1.0) == pytest.approx(1.0)


def test_bounds_dominate_flow_on_grid():
    m = identity_rate_model(eta1=3, nu1=1.3, eta2=2, nu2=0.7)
    gen = np.random.default_rng(4)
    for _ in range(200):
        x = gen.uniform(-5, 5, m.kappa)
        for k in (1, 2):
            g = global_bound(m, k, x)
            for w in (0.1, 1.0, 10.0):
                loc = local_bound(m, k, x, w)
                sup = main_flow(m, k, x, np.linspace(0, w, 2001)).max()
                assert m.pop(k).rate(sup) <= loc + 1e-7
                assert loc <= g + 1e-7


def test_adaptive_window_examples():
    m = paper_model(50, 50)
    assert adaptive_window(m, 1.0, 1.0) == pytest.approx(0.01)
    assert adaptive_window(m, 1e-12, 1e-12) == 10.0
    assert adaptive_window(m, 1e12, 1e12) == 1e-6
    assert adaptive_window(paper_model(1, 1), 0.5, 0.5) == pytest.approx(1.0)


# ----------------------------------------------------------------- simulation


def test_constant_rates_never_reject():
    m = NetworkModel((PopulationParams(2, 1.0, -1, 5, Constant(2.0)), PopulationParams(1, 1.0, 1, 5, Constant(2.0))))
    for bound in BoundKind:
        res = thinning_simulate(m, m.zeros(), 20.0, bound, RngStream(1, 0))
        assert res.stats.rejected == 0
        assert sum(res.spike_counts) == len(res.path)


def test_deterministic_flow_without_spikes():
    # rates so small that no spike occurs: the recorded grid is the linear flow
    tiny = Constant(1e-12)
    m = NetworkModel((PopulationParams(2, 1.0, -1, 5, tiny), PopulationParams(1, 0.5, 1, 5, tiny)))
    x0 = np.array([1.0, -2.0, 0.5, 3.0, -1.0])
    res = thinning_simulate(m, x0, 5.0, BoundKind.LOCAL, RngStream(2, 0), grid_dt=0.5)
    assert len(res.path) == 0
    for i, row in enumerate(res.grid):
        np.testing.assert_allclose(row, expm_action(m, 0.5 * i, x0), rtol=1e-12, atol=1e-14)


def test_replay_reproduces_states():
    m = paper_model(20, 20)
    res = thinning_simulate(m, m.zeros(), 30.0, BoundKind.LOCAL, RngStream(3, 0))
    assert len(res.path) > 100
    assert np.all(np.diff(res.path.times) > 0)
    replay = replay_path(m, res.path)
    assert np.abs(replay - res.path.states).max() <= 1e-10 * max(1.0, np.abs(res.path.states).max())


def test_recorded_intensities_match_state():
    m = paper_model(20, 20)
    path = thinning_simulate(m, m.zeros(), 10.0, BoundKind.GLOBAL, RngStream(4, 0)).path
    lam1 = m.pop(1).rate(path.states[:, 0])
    lam2 = m.pop(2).rate(path.states[:, m.block(2).start])
    np.testing.assert_allclose(path.intensities, np.column_stack([lam1, lam2]), rtol=1e-12)


@pytest.mark.parametrize("bound", list(BoundKind))
def test_determinism(bound):
    m = paper_model(20, 20)
    a = thinning_simulate(m, m.zeros(), 20.0, bound, RngStream(9, 1)).spikes
    b = thinning_simulate(m, m.zeros(), 20.0, bound, RngStream(9, 1)).spikes
    assert a.times.tobytes() == b.times.tobytes()
    assert a.neuron.tobytes() == b.neuron.tobytes()
    c = thinning_simulate(m, m.zeros(), 20.0, bound, RngStream(9, 2)).spikes
    assert a.times.size != c.times.size or not np.array_equal(a.times, c.times)


def test_spike_train_per_neuron_sorted():
    m = paper_model(10, 10)
    sp = thinning_simulate(m, m.zeros(), 20.0, BoundKind.LOCAL, RngStream(5, 0)).spikes
    for k in (1, 2):
        for n in range(1, 11):
            t = sp.neuron_times(k, n)
            assert np.all(np.diff(t) > 0)
    assert sum(sp.count(k) for k in (1, 2)) == sp.times.size


def test_local_rejects_less_than_global_in_paper_setup():
    m = paper_model(50, 50, nu=(0.9, 0.9))
    fr = {b: thinning_simulate(m, m.zeros(), 50.0, b, RngStream(6, 0), record="none").stats.rejection_fraction
          for b in BoundKind}
    assert fr[BoundKind.LOCAL] < fr[BoundKind.GLOBAL]


def test_invalid_horizon():
    m = paper_model()
    with pytest.raises(ValueError):
        thinning_simulate(m, m.zeros(), 0.0, BoundKind.LOCAL, RngStream(0))


@pytest.mark.parametrize("status", ["STATUS_BROKEN_BOUND", "STATUS_NONFINITE"])
def test_kernel_failures_raise(monkeypatch, status):
    from hawkes_cascade import _numerics, pdmp

    code = getattr(_numerics, status)
    empty = np.zeros(0)
    monkeypatch.setattr(pdmp._numerics, "thinning",
                        lambda *a: (code, np.zeros(5, np.int64), empty, empty, empty, empty, empty, empty))
    m = paper_model(10, 10)
    with pytest.raises(NumericalError):
        thinning_simulate(m, m.zeros(), 1.0, BoundKind.LOCAL, RngStream(0))
