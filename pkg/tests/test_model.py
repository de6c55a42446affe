import math

import numpy as np
import pytest
from scipy.linalg import expm

from hawkes_cascade.model import (
    ClippedLinear,
    Constant,
    ExpSigmoid,
    NetworkModel,
    PopulationParams,
    RngStream,
    diffusion_sigma_action,
    drift_B,
    expm_action,
    full_drift,
    index_map,
    paper_model,
    sigma_matrix,
)


def dense_generator(etas, nus):
    """Block-bidiagonal A written out entry by entry, independent of the package."""
    kappa = sum(e + 1 for e in etas)
    A = np.zeros((kappa, kappa))
    offset = 0
    for eta, nu in zip(etas, nus):
        for j in range(eta + 1):
            A[offset + j, offset + j] = -nu
            if j < eta:
                A[offset + j, offset + j + 1] = 1.0
        offset += eta + 1
    return A


def two_pop(eta1, nu1, eta2, nu2, rates=(Constant(1.0), Constant(1.0)), c=(-1, 1), n=(10, 10)):
    return NetworkModel((
        PopulationParams(eta1, nu1, c[0], n[0], rates[0]),
        PopulationParams(eta2, nu2, c[1], n[1], rates[1]),
    ))


# ----------------------------------------------------------------- rates


def test_exp_sigmoid_values_and_cap():
    f = ExpSigmoid(10.0, 20.0)
    assert f(0.0) == pytest.approx(10.0)
    assert f.f_max == 400.0
    assert f(50.0) == pytest.approx(400.0, rel=1e-12)
    # both branches meet at log(threshold) with value scale * threshold
    lt = math.log(20.0)
    assert f(np.nextafter(lt, -np.inf)) == pytest.approx(200.0, rel=1e-12)
    assert f(lt) == pytest.approx(200.0, rel=1e-12)


def test_clipped_linear_and_constant():
    f = ClippedLinear(1.0, 2.0, 5.0)
    np.testing.assert_allclose(f(np.array([-3.0, 0.0, 1.0, 10.0])), [1.0, 1.0, 3.0, 5.0])
    assert Constant(2.5)(np.array([1.0, -7.0])).tolist() == [2.5, 2.5]


@pytest.mark.parametrize("bad", [
    lambda: ExpSigmoid(0.0, 20.0),
    lambda: ExpSigmoid(1.0, 1.0),
    lambda: ClippedLinear(0.0, 1.0, 2.0),
    lambda: ClippedLinear(1.0, -1.0, 2.0),
    lambda: ClippedLinear(3.0, 1.0, 2.0),
    lambda: Constant(0.0),
])
def test_rate_parameter_validation(bad):
    with pytest.raises(ValueError):
        bad()


def test_population_validation():
    with pytest.raises(ValueError):
        PopulationParams(1, 0.0, -1, 10, Constant(1.0))
    with pytest.raises(ValueError):
        PopulationParams(1, 1.0, 0, 10, Constant(1.0))
    with pytest.raises(ValueError):
        NetworkModel((
            PopulationParams(1, 1.0, -1, 10, Constant(1.0), p=0.3),
            PopulationParams(1, 1.0, 1, 10, Constant(1.0), p=0.6),
        ))


# ----------------------------------------------------------------- layout


def test_index_map_examples(model):
    assert index_map(model, 1, 1) == 1
    assert index_map(model, 2, 1) == 5
    assert index_map(model, 2, model.pop(2).eta + 1) == model.kappa
    assert sorted(index_map(model, k, j) for k in (1, 2) for j in range(1, model.pop(k).eta + 2)) == \
        list(range(1, model.kappa + 1))
    with pytest.raises(IndexError):
        index_map(model, 3, 1)
    with pytest.raises(IndexError):
        index_map(model, 1, 5)


def test_derived_sizes(model):
    assert model.kappa == 3 + 2 + 2
    assert model.total_neurons == 100
    assert model.p == pytest.approx((0.5, 0.5))
    assert model.driver(1) == 2 and model.driver(2) == 1


# ----------------------------------------------------------------- flows


def test_expm_action_identity_and_example():
    m = two_pop(1, 1.0, 1, 1.0)
    x = np.array([1.0, 1.0, 0.0, 0.0])
    np.testing.assert_array_equal(expm_action(m, 0.0, x), x)
    y = expm_action(m, 1.0, x)
    np.testing.assert_allclose(y[:2], [2 / math.e, 1 / math.e], rtol=1e-14)
    np.testing.assert_array_equal(y[2:], 0.0)
    with pytest.raises(ValueError):
        expm_action(m, -1.0, x)


@pytest.mark.parametrize("etas", [(1, 1), (3, 2), (8, 5), (0, 4)])
def test_expm_action_matches_dense_expm(etas):
    gen = np.random.default_rng(sum(etas))
    nus = gen.uniform(0.2, 3.0, 2)
    m = two_pop(etas[0], nus[0], etas[1], nus[1])
    A = dense_generator(etas, nus)
    for t in (0.01, 0.7, 3.0, 10.0):
        x = gen.normal(size=m.kappa)
        ref = expm(A * t) @ x
        np.testing.assert_allclose(expm_action(m, t, x), ref, rtol=1e-9, atol=1e-12 * np.abs(x).max())


def test_expm_action_derivative_is_linear_drift():
    m = paper_model()
    gen = np.random.default_rng(1)
    x = gen.normal(size=m.kappa)
    Ax = dense_generator((3, 2), (1.0, 1.0)) @ x
    errs = [np.abs((expm_action(m, h, x) - x) / h - Ax).max() for h in (1e-4, 1e-5)]
    assert errs[1] < errs[0] and errs[0] < 1e-3
    assert errs[0] / errs[1] == pytest.approx(10, rel=0.05)


def test_drift_B_example(model):
    b = drift_B(model, model.zeros())
    expected = np.zeros(model.kappa)
    expected[3] = -1.0
    expected[6] = 10.0
    np.testing.assert_allclose(b, expected)


def test_drift_B_constant_rates_ignores_state():
    m = two_pop(2, 1.0, 1, 2.0, rates=(Constant(3.0), Constant(0.5)))
    x = np.random.default_rng(2).normal(size=m.kappa)
    np.testing.assert_allclose(drift_B(m, x), [0, 0, -0.5, 0, 3.0])


def test_sigma_action_example(model):
    v = diffusion_sigma_action(model, model.zeros(), (0.0, 1.0))
    expected = np.zeros(model.kappa)
    expected[3] = -math.sqrt(2.0)
    np.testing.assert_allclose(v, expected)
    np.testing.assert_array_equal(diffusion_sigma_action(model, model.zeros(), (0.0, 0.0)), 0.0)


def test_sigma_matrix_pattern_and_rank(model):
    x = np.random.default_rng(3).normal(size=model.kappa)
    sig = sigma_matrix(model, x)
    nz = np.argwhere(sig != 0)
    assert nz.tolist() == [[3, 1], [6, 0]]
    assert np.linalg.matrix_rank(sig) == 2
    f1x = model.pop(1).rate(x[0])
    assert sig[6, 0] == pytest.approx(1 / math.sqrt(0.5) * math.sqrt(f1x))


def test_full_drift_example():
    m = two_pop(1, 2.0, 1, 1.0, rates=(Constant(1.0), Constant(1.0)), c=(1, 1))
    y = full_drift(m, np.array([3.0, 5.0, 0.0, 0.0]))
    np.testing.assert_allclose(y[:2], [-1.0, -9.0])


def test_full_drift_zero_state_is_B(model):
    np.testing.assert_array_equal(full_drift(model, model.zeros()), drift_B(model, model.zeros()))


# ----------------------------------------------------------------- rng


def test_rng_streams_reproducible_and_distinct():
    a = RngStream(7, 3).normal(5)
    b = RngStream(7, 3).normal(5)
    c = RngStream(7, 4).normal(5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert RngStream(7, 3).child(2).kernel_seed() == RngStream(7, 3).child(2).kernel_seed()
    assert RngStream(7, 3).child(2).kernel_seed() != RngStream(7, 3).child(1).kernel_seed()


def test_with_neurons_keeps_structure(model):
    m2 = model.with_neurons(10, 30)
    assert m2.total_neurons == 40 and m2.p == pytest.approx((0.25, 0.75))
    assert m2.kappa == model.kappa
