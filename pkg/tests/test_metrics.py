"""Norm/dual/Legendre layer: closed forms, duality, convexity."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finslerdisc.errors import ContractError
from finslerdisc.metrics import (ConformalMetric, FlatMetric, Metric,
                                 RandersMetric, circle_point, circle_tangent,
                                 metric_from_spec, wrap_angle)

RNG = np.random.default_rng(7)


def sample_metrics():
    return [
        FlatMetric(),
        RandersMetric(np.array([0.2, 0.1])),
        RandersMetric(np.array([-0.15, 0.25])),
        ConformalMetric(amplitude=0.2, center=(0.25, -0.1), width2=0.12),
    ]


def interior_points(n):
    r = 0.95 * np.sqrt(RNG.uniform(0, 1, n))
    th = RNG.uniform(0, 2 * np.pi, n)
    return np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)


# ---------------------------------------------------------------------------
# closed forms

def test_flat_norm_and_dual():
    m = FlatMetric()
    v = np.array([3.0, 4.0])
    assert m.norm(np.zeros(2), v) == pytest.approx(5.0, abs=1e-14)
    assert m.dual_norm(np.zeros(2), v) == pytest.approx(5.0, abs=1e-14)


def test_randers_dual_matches_generic_scan():
    m = RandersMetric(np.array([0.2, 0.1]))
    x = interior_points(20)
    a = RNG.normal(size=(20, 2))
    closed = m.dual_norm(x, a)
    generic, _ = Metric._sphere_max(m, x, a)
    assert np.max(np.abs(closed - generic)) < 1e-9


def test_conformal_dual_is_scaled_euclidean():
    m = ConformalMetric(amplitude=0.3, center=(0.1, 0.2), width2=0.2)
    x = interior_points(20)
    a = RNG.normal(size=(20, 2))
    expect = np.linalg.norm(a, axis=-1) / m.factor(x)
    assert np.max(np.abs(m.dual_norm(x, a) - expect)) < 1e-12


# ---------------------------------------------------------------------------
# duality and Legendre round trips

@pytest.mark.parametrize("metric", sample_metrics(),
                         ids=lambda m: m.variant + str(id(m) % 97))
def test_cauchy_schwarz_duality(metric):
    """alpha(v) <= phi*(alpha) phi(v), equality at the Legendre pair."""
    x = interior_points(40)
    v = RNG.normal(size=(40, 2))
    a = RNG.normal(size=(40, 2))
    pairing = np.sum(a * v, axis=-1)
    bound = metric.dual_norm(x, a) * metric.norm(x, v)
    assert np.all(pairing <= bound + 1e-9)


@pytest.mark.parametrize("metric", sample_metrics(),
                         ids=lambda m: m.variant + str(id(m) % 97))
def test_legendre_round_trip(metric):
    x = interior_points(60)
    v = RNG.normal(size=(60, 2))
    v = v / metric.norm(x, v)[..., None]
    a = metric.legendre(x, v)
    # alpha(v) = 1 and phi*(alpha) = 1 characterize the pair
    assert np.max(np.abs(np.sum(a * v, axis=-1) - 1)) < 1e-8
    assert np.max(np.abs(metric.dual_norm(x, a) - 1)) < 1e-8
    v_back = metric.legendre_inverse(x, a)
    assert np.max(np.abs(v_back - v)) < 1e-6


@pytest.mark.parametrize("metric", sample_metrics(),
                         ids=lambda m: m.variant + str(id(m) % 97))
def test_finsler_gradient_requires_unit_covector(metric):
    x = np.zeros(2)
    a = np.array([2.0, 0.0])
    with pytest.raises(ContractError):
        metric.finsler_gradient(x, 5.0 * a / metric.dual_norm(x, a))


# ---------------------------------------------------------------------------
# homogeneity / convexity invariants

@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 10.0), st.floats(0, 2 * np.pi),
       st.floats(0, 2 * np.pi), st.floats(0.0, 0.9))
def test_positive_homogeneity(lam, th_v, th_x, r):
    x = r * np.array([np.cos(th_x), np.sin(th_x)])
    v = np.array([np.cos(th_v), np.sin(th_v)])
    for m in (RandersMetric(np.array([0.2, 0.1])),
              ConformalMetric(amplitude=0.2, center=(0.2, 0.0), width2=0.15)):
        assert m.norm(x, lam * v) == pytest.approx(lam * m.norm(x, v),
                                                   rel=1e-12)
        assert m.dual_norm(x, lam * v) == pytest.approx(
            lam * m.dual_norm(x, v), rel=1e-7)


@pytest.mark.parametrize("metric", sample_metrics(),
                         ids=lambda m: m.variant + str(id(m) % 97))
def test_quadratic_convexity_audit(metric):
    rep = metric.check_quadratic_convexity(interior_points(8))
    assert rep.passed, rep.values


def test_reversibility_flags():
    assert FlatMetric().reversible
    assert not RandersMetric(np.array([0.1, 0.0])).reversible
    assert ConformalMetric(amplitude=0.1).reversible


def test_randers_irreversibility_is_real():
    m = RandersMetric(np.array([0.2, 0.1]))
    v = np.array([1.0, 0.0])
    assert abs(m.norm(np.zeros(2), v) - m.norm(np.zeros(2), -v)) > 0.3


# ---------------------------------------------------------------------------
# serialization round trip

@pytest.mark.parametrize("metric", sample_metrics(),
                         ids=lambda m: m.variant + str(id(m) % 97))
def test_spec_round_trip(metric):
    m2 = metric_from_spec(metric.to_spec())
    x = interior_points(10)
    v = RNG.normal(size=(10, 2))
    assert np.max(np.abs(m2.norm(x, v) - metric.norm(x, v))) < 1e-14


def test_wrap_angle_range():
    s = np.linspace(-20, 20, 101)
    w = wrap_angle(s)
    assert np.all((w >= 0) & (w < 2 * np.pi))
    assert np.max(np.abs(np.cos(w) - np.cos(s))) < 1e-12


def test_circle_frame_orthogonality():
    s = np.linspace(0, 2 * np.pi, 17)
    p = circle_point(s)
    t = circle_tangent(s)
    assert np.max(np.abs(np.sum(p * t, axis=-1))) < 1e-14
