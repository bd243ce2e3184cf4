import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mixdro.core import INF, DiscreteSchema, GroundMetric, Hypothesis
from mixdro.cutter import worst_case
from mixdro.losses import LossSpec
from mixdro.master import ModelConfig
from mixdro.transport_oracle import FiniteSupport, worst_case_primal

from _gen import random_dataset, random_hypothesis


@settings(max_examples=40)
@given(st.integers(0, 2**31 - 1))
def test_dual_matches_transport_primal(seed):
    """On data without continuous features the cutting-plane dual equals the transport LP."""
    rng = np.random.default_rng(seed)
    schema = DiscreteSchema(tuple(int(k) for k in rng.integers(2, 4, size=int(rng.integers(1, 4)))))
    data = random_dataset(rng, "classification", Mx=0, schema=schema, N_max=8)
    loss = LossSpec(("hinge", "logloss", "smooth_hinge")[rng.integers(3)])
    metric = GroundMetric("l1", float(rng.uniform(0.5, 2)), (1.0, 2.5, INF)[rng.integers(3)], (1.0, 2.0)[rng.integers(2)])
    eps = float(rng.choice([0.0, 0.05, 0.3, 1.0, 5.0]))
    h = random_hypothesis(rng, data)
    support = FiniteSupport.from_schema(schema, metric, "classification")
    primal, Q = worst_case_primal(support, support.empirical_weights(data), h, loss, eps)
    dual = worst_case(data, ModelConfig(loss, metric, eps), h).objective
    assert dual == pytest.approx(primal, abs=2e-6 * max(1.0, abs(primal)))
    assert Q.sum() == pytest.approx(1.0) and np.all(Q >= -1e-12)


def test_regression_with_pinned_output(rng):
    schema = DiscreteSchema((3, 2))
    data = random_dataset(rng, "regression", N=6, Mx=0, schema=schema)
    metric = GroundMetric("l1", 1.0, INF)
    support = FiniteSupport.from_schema(schema, metric, "regression", y_values=np.unique(data.y))
    h = random_hypothesis(rng, data)
    loss = LossSpec("huber", 0.5)
    primal, _ = worst_case_primal(support, support.empirical_weights(data), h, loss, 0.4)
    assert worst_case(data, ModelConfig(loss, metric, 0.4), h).objective == pytest.approx(primal, abs=1e-6)


def test_support_distances():
    schema = DiscreteSchema((3,))
    s = FiniteSupport.from_schema(schema, GroundMetric(kappa_z=2.0, kappa_y=0.5), "classification")
    assert s.size == 6
    a = s.locate(np.array([[0.0, 0.0], [1.0, 0.0]]), np.array([-1.0, 1.0]))
    assert s.dist[a[0], a[1]] == pytest.approx(2.5)
    pinned = FiniteSupport.from_schema(schema, GroundMetric(kappa_y=INF), "classification")
    b = pinned.locate(np.array([[0.0, 0.0], [0.0, 0.0]]), np.array([-1.0, 1.0]))
    assert np.isinf(pinned.dist[b[0], b[1]])
    with pytest.raises(ValueError):
        s.locate(np.array([[1.0, 1.0]]), np.array([1.0]))


def test_toy_support():
    s = FiniteSupport.toy(kappa_z=1.0, kappa_y=1.0)
    assert s.size == 4 and s.names == ("(-1,-1)", "(-1,+1)", "(+1,-1)", "(+1,+1)")
    assert s.dist[0, 3] == 2.0 and s.dist[0, 1] == 1.0 and s.dist[0, 2] == 1.0


def test_zero_budget_returns_empirical_loss(rng):
    s = FiniteSupport.toy()
    w = np.array([0.1, 0.4, 0.3, 0.2])
    h = Hypothesis(0.2, [1.0])
    val, Q = worst_case_primal(s, w, h, LossSpec("hinge"), 0.0)
    assert val == pytest.approx(w @ s.losses(h, LossSpec("hinge")))
    assert np.allclose(Q, w)


def test_validation():
    s = FiniteSupport.toy()
    h = Hypothesis(0.0, [1.0])
    with pytest.raises(ValueError):
        worst_case_primal(s, np.array([0.5, 0.5, 0.5, 0.0]), h, LossSpec("hinge"), 0.1)
    with pytest.raises(ValueError):
        worst_case_primal(s, np.full(4, 0.25), h, LossSpec("hinge"), -0.1)
    with pytest.raises(ValueError):
        FiniteSupport(np.zeros((2, 1)), np.array([1.0, -1.0]), np.array([[0.0, 1.0], [2.0, 0.0]]), "classification")
