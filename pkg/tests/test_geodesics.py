"""Geodesic flow, shooting, lens maps, boundary distance fields.

Oracles: flat and drift-perturbed (Randers) metrics have closed-form
geodesics (straight lines); the conformal family is checked by
step-halving Richardson comparison and first-variation identities.
"""

import numpy as np
import pytest

from finslerdisc import geodesics as G
from finslerdisc.errors import DomainError
from finslerdisc.fields import wrap_signed
from finslerdisc.metrics import (ConformalMetric, FlatMetric, RandersMetric,
                                 circle_point, circle_tangent)

RNG = np.random.default_rng(11)

FLAT = FlatMetric()
RANDERS = RandersMetric(np.array([0.2, 0.1]))
CONF = ConformalMetric(amplitude=0.15, center=(0.2, 0.1), width2=0.15)


# ---------------------------------------------------------------------------
# flat closed forms

def test_flat_chord_lengths():
    for s1, s2 in [(0.0, np.pi / 2), (0.3, 2.4), (1.0, 4.0)]:
        seg = G.connect(FLAT, circle_point(s1), circle_point(s2))
        expect = 2 * np.abs(np.sin(0.5 * (s2 - s1)))
        assert seg.length == pytest.approx(expect, abs=1e-10)
        assert seg.energy_drift < 1e-12


def test_flat_geodesics_are_straight():
    seg = G.integrate_geodesic(FLAT, np.array([0.2, -0.3]),
                               np.array([0.5, 1.0]))
    chord = seg.x[-1] - seg.x[0]
    chord /= np.linalg.norm(chord)
    dev = seg.x - seg.x[0]
    cross = dev[:, 0] * chord[1] - dev[:, 1] * chord[0]
    assert np.max(np.abs(cross)) < 1e-12


def test_flat_lens_map_reflection_formula():
    d = np.array([-1.0, 0.3])
    d = d / np.linalg.norm(d)
    s_exit, v_exit = G.lens_map(FLAT, 0.0, d)
    t = -2 * d[0]  # chord parameter hitting the unit circle again
    x_exit = np.array([1.0, 0.0]) + t * d
    assert s_exit == pytest.approx(
        np.mod(np.arctan2(x_exit[1], x_exit[0]), 2 * np.pi), abs=1e-10)
    assert np.max(np.abs(v_exit - d)) < 1e-10


def test_flat_dual_lens_map_closed_form():
    tab = G.dual_lens_map(FLAT, n_s=32, n_tau=17)
    sg, tg = np.meshgrid(tab.s, tab.tau, indexing="ij")
    assert np.max(np.abs(tab.s_out - (sg + np.pi - 2 * np.arcsin(tg)))) < 1e-9
    assert np.max(np.abs(tab.tau_out - tg)) < 1e-9


def test_flat_boundary_field_matches_chords():
    bf = G.boundary_distance_field(FLAT, n_b=64)
    p, q = 0.37, 2.11
    assert bf(p, q) == pytest.approx(2 * np.sin(0.5 * (q - p)), abs=1e-12)
    assert bf(p, q, dq=1) == pytest.approx(np.cos(0.5 * (q - p)), abs=1e-8)


# ---------------------------------------------------------------------------
# drift metric: straight lines, asymmetric length

def test_randers_distance_closed_form():
    for _ in range(5):
        s1, s2 = RNG.uniform(0, 2 * np.pi, 2)
        if abs(wrap_signed(s1 - s2)) < 0.3:
            continue
        p, q = circle_point(s1), circle_point(s2)
        ch = q - p
        expect = np.linalg.norm(ch) + ch @ RANDERS.drift
        seg = G.connect(RANDERS, p, q)
        assert seg.length == pytest.approx(expect, abs=1e-9)


def test_randers_asymmetry():
    p, q = circle_point(0.2), circle_point(2.8)
    d1 = G.distance(RANDERS, p, q)
    d2 = G.distance(RANDERS, q, p)
    ch = q - p
    assert d1 - d2 == pytest.approx(2 * ch @ RANDERS.drift, abs=1e-12)
    assert abs(d1 - d2) > 0.1


def test_randers_unit_speed_along_segment():
    seg = G.connect(RANDERS, circle_point(0.5), circle_point(3.0))
    assert seg.unit_speed_residual(RANDERS) < 1e-9


# ---------------------------------------------------------------------------
# conformal family: internal-consistency oracles

def test_conformal_step_halving():
    p, q = circle_point(0.3), circle_point(2.0)
    l1 = G.connect(G.ReversedMetric(CONF), p, q, step=4e-3).length
    l2 = G.connect(G.ReversedMetric(CONF), p, q, step=2e-3).length
    l3 = G.connect(CONF, p, q, step=1e-3).length
    assert abs(l1 - l3) < 1e-9
    assert abs(l2 - l3) < 1e-10


def test_conformal_energy_conservation():
    seg = G.integrate_geodesic(CONF, np.array([0.1, -0.4]),
                               np.array([1.0, 0.7]))
    assert seg.energy_drift < 1e-9
    assert seg.unit_speed_residual(CONF) < 1e-6


def test_conformal_length_is_factor_integral():
    # unit-speed parametrization: integral of the factor along the path
    seg = G.integrate_geodesic(CONF, circle_point(1.0),
                               np.array([-0.8, -0.6]))
    euclid_speed = np.linalg.norm(np.gradient(seg.x, seg.t, axis=0), axis=1)
    lam = CONF.factor(seg.x)
    assert np.max(np.abs(euclid_speed * lam - 1.0)[2:-2]) < 1e-4


def test_conformal_boundary_field_interpolation():
    bf = G.boundary_distance_field(CONF, n_b=64, step=4e-3)
    for p, q in [(0.37, 2.11), (0.37, 0.45)]:
        out = G.connect_batch(CONF, circle_point(np.array([p])),
                              np.array([q]), step=1e-3)
        assert abs(bf(p, q) - out["length"][0]) < 5e-7
    assert abs(bf(0.9, 1.7) - bf(1.7, 0.9)) < 1e-14


# ---------------------------------------------------------------------------
# first variation of boundary distance

@pytest.mark.parametrize("metric,step", [(FLAT, 1e-3), (RANDERS, 1e-3),
                                         (CONF, 2e-3)],
                         ids=["flat", "randers", "conformal"])
def test_first_variation(metric, step):
    """d/dq f(p, q) applied to the tangent equals the exit covector pairing,
    and d/dp f applied to the tangent is minus the entry pairing."""
    rng = np.random.default_rng(3)
    for _ in range(6):
        p, q = rng.uniform(0, 2 * np.pi, 2)
        if abs(wrap_signed(p - q)) < 0.5:
            continue
        seg = G.connect(metric, circle_point(p), circle_point(q), step=step)
        h = 1e-5
        dq = (G.distance(metric, circle_point(p), circle_point(q + h), step=step)
              - G.distance(metric, circle_point(p), circle_point(q - h),
                           step=step)) / (2 * h)
        a_exit = metric.legendre(seg.x[-1], seg.v[-1])
        assert dq == pytest.approx(a_exit @ circle_tangent(q), abs=1e-6)
        dp = (G.distance(metric, circle_point(p + h), circle_point(q),
                         step=step)
              - G.distance(metric, circle_point(p - h), circle_point(q),
                           step=step)) / (2 * h)
        a_entry = metric.legendre(seg.x[0], seg.v[0])
        assert dp == pytest.approx(-a_entry @ circle_tangent(p), abs=1e-6)


# ---------------------------------------------------------------------------
# domain handling and audits

def test_tangential_entry_rejected():
    with pytest.raises(DomainError):
        G.integrate_geodesic(FLAT, circle_point(0.0), circle_tangent(0.0))


def test_outside_start_rejected():
    with pytest.raises(DomainError):
        G.integrate_geodesic(FLAT, np.array([1.5, 0.0]), np.array([1.0, 0.0]))


def test_chart_covector_round_trip():
    for metric in (FLAT, RANDERS, CONF):
        s = np.array([0.3, 1.7, 4.0])
        tau = np.array([-0.4, 0.0, 0.55])
        x, a = G.covector_from_chart(metric, s, tau)
        assert np.max(np.abs(metric.dual_norm(x, a) - 1)) < 1e-12
        s2, t2 = G.chart_from_exit(x, a)
        assert np.max(np.abs(wrap_signed(s2 - s))) < 1e-12
        assert np.max(np.abs(t2 - tau)) < 1e-12


@pytest.mark.parametrize("metric", [FLAT, RANDERS, CONF],
                         ids=["flat", "randers", "conformal"])
def test_simplicity_audit_passes(metric):
    rep = G.simplicity_audit(metric, n_entries=6, n_fan=21, step=4e-3,
                             n_pairs=4)
    assert rep.passed, rep.values


def test_reversed_metric_flips_norm():
    rev = G.ReversedMetric(RANDERS)
    x = np.zeros(2)
    v = np.array([1.0, 0.0])
    assert rev.norm(x, v) == RANDERS.norm(x, -v)
    assert rev.dual_norm(x, v) == pytest.approx(
        RANDERS.dual_norm(x, -v), abs=1e-12)
