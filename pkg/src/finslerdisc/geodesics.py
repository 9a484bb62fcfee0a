"""Geodesic flow on the disc: integration, shooting, boundary fields, lens maps.

Trajectories are integrated in cotangent variables for the Hamiltonian
H(x, alpha) = 1/2 phi*(x, alpha)^2, which keeps reconstructed metrics
(defined through their cospheres) first-class citizens.  All solvers
are batched: state arrays have shape (B, 2) and the boundary-exit
event is refined per trajectory by bisection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericError
from .fields import BoundaryField, SigmaTable, wrap_signed
from .metrics import (Metric, angle_of, circle_point, circle_tangent,
                      wrap_angle)
from .reports import Report

DEFAULT_STEP = 1e-3
EVENT_TOL = 1e-13
ENERGY_TOL = 1e-7
TANGENCY_FLOOR = 1e-3
MAX_LENGTH = 8.0


class ReversedMetric(Metric):
    """phi_rev(x, v) = phi(x, -v); used to integrate backwards in time."""

    variant = "reversed"

    def __init__(self, base):
        self.base = base
        self.reversible = base.reversible
        self.straight_geodesics = base.straight_geodesics
        if hasattr(base, "drift"):
            self.drift = -base.drift

    def norm(self, x, v):
        return self.base.norm(x, -np.asarray(v, float))

    def dual_norm_raw(self, x, a):
        return self.base.dual_norm_raw(x, -np.asarray(a, float))

    def dual_grad_a(self, x, a):
        return -self.base.dual_grad_a(x, -np.asarray(a, float))

    def dual_grad_x(self, x, a):
        return self.base.dual_grad_x(x, -np.asarray(a, float))

    def exact_distance(self, x, y):
        return self.base.exact_distance(y, x)

    def to_spec(self):
        return {"variant": "reversed", **{f"base_{k}": v
                for k, v in self.base.to_spec().items()}}


# ---------------------------------------------------------------------------
# batched Hamiltonian integration

def _rhs(metric, x, a):
    ps = metric.dual_norm_raw(x, a)[..., None]
    return ps * metric.dual_grad_a(x, a), -ps * metric.dual_grad_x(x, a)


def _rk4_step(metric, x, a, h):
    k1x, k1a = _rhs(metric, x, a)
    k2x, k2a = _rhs(metric, x + 0.5 * h * k1x, a + 0.5 * h * k1a)
    k3x, k3a = _rhs(metric, x + 0.5 * h * k2x, a + 0.5 * h * k2a)
    k4x, k4a = _rhs(metric, x + h * k3x, a + h * k3a)
    return (x + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x),
            a + (h / 6.0) * (k1a + 2 * k2a + 2 * k3a + k4a))


def flow_to_boundary(metric, x0, a0, step=DEFAULT_STEP,
                     max_length=MAX_LENGTH, record_every=0):
    """Integrate a batch of unit covectors until each trajectory exits.

    Returns a dict with exit_x, exit_a, length, trapped mask and,
    if record_every > 0, the sample lists (single-trajectory use).
    """
    x = np.array(x0, float, copy=True).reshape(-1, 2)
    a = np.array(a0, float, copy=True).reshape(-1, 2)
    B = x.shape[0]
    t = np.zeros(B)
    done = np.zeros(B, bool)
    was_inside = np.linalg.norm(x, axis=-1) < 1.0 - 1e-9
    exit_x = np.array(x, copy=True)
    exit_a = np.array(a, copy=True)
    exit_t = np.zeros(B)
    samples = [] if record_every else None
    if record_every:
        samples.append((t.copy(), x.copy(), a.copy()))

    n_steps = int(np.ceil(max_length / step)) + 2
    for k in range(n_steps):
        act = ~done
        if not np.any(act):
            break
        xa, aa = x[act], a[act]
        x1, a1 = _rk4_step(metric, xa, aa, step)
        r1 = np.linalg.norm(x1, axis=-1)
        inside_now = r1 < 1.0 - 1e-9
        crossed = was_inside[act] & (r1 >= 1.0)

        if np.any(crossed):
            # bisection on the step fraction for the crossing subset
            xs, as_ = xa[crossed], aa[crossed]
            lo = np.zeros(xs.shape[0])
            hi = np.ones(xs.shape[0])
            for _ in range(52):
                mid = 0.5 * (lo + hi)
                xm, _ = _rk4_step(metric, xs, as_, (mid * step)[:, None])
                out = np.linalg.norm(xm, axis=-1) >= 1.0
                hi = np.where(out, mid, hi)
                lo = np.where(out, lo, mid)
            frac = 0.5 * (lo + hi)
            xe, ae = _rk4_step(metric, xs, as_, (frac * step)[:, None])
            idx = np.flatnonzero(act)[crossed]
            exit_x[idx] = xe
            exit_a[idx] = ae
            exit_t[idx] = t[idx] + frac * step
            done[idx] = True

        keep = ~crossed
        idx_keep = np.flatnonzero(act)[keep]
        x[idx_keep] = x1[keep]
        a[idx_keep] = a1[keep]
        t[idx_keep] += step
        was_inside[idx_keep] |= inside_now[keep]

        if record_every and (k + 1) % record_every == 0 and not np.all(done):
            samples.append((t.copy(), x.copy(), a.copy()))

    trapped = ~done
    out = {"exit_x": exit_x, "exit_a": exit_a, "length": exit_t,
           "trapped": trapped}
    if record_every:
        out["samples"] = samples
    return out


@dataclass
class GeodesicSegment:
    """Arc-length parametrized trajectory with boundary entry/exit data."""

    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    a: np.ndarray
    entry_s: float | None = None
    exit_s: float | None = None
    length: float = 0.0
    trapped: bool = False
    energy_drift: float = 0.0
    metric_spec: dict = field(default_factory=dict)

    def unit_speed_residual(self, metric):
        return float(np.max(np.abs(metric.norm(self.x, self.v) - 1.0)))


def integrate_geodesic(metric, x0, v0, step=DEFAULT_STEP,
                       max_length=MAX_LENGTH, record_every=1):
    """Integrate one geodesic from (x0, v0) until it exits the disc."""
    x0 = np.asarray(x0, float)
    v0 = np.asarray(v0, float)
    r0 = np.linalg.norm(x0)
    if r0 > 1.0 + 1e-9:
        raise DomainError("start point outside the closed disc")
    nv = metric.norm(x0, v0)
    if nv == 0 or not np.isfinite(nv):
        raise DomainError("invalid initial velocity")
    v0 = v0 / nv
    if r0 > 1.0 - 1e-9:
        inward = float(np.dot(v0, -x0 / r0))
        if inward < TANGENCY_FLOOR:
            raise DomainError(
                f"boundary start must point strictly inward "
                f"(inward component {inward:.2e})")
    a0 = metric.legendre(x0, v0)
    res = flow_to_boundary(metric, x0[None], a0[None], step=step,
                           max_length=max_length,
                           record_every=max(record_every, 0))
    if res["trapped"][0]:
        raise NumericError("trajectory did not exit (trapped or tangent)")
    samples = res.get("samples", [(np.zeros(1), x0[None], a0[None])])
    ts = np.array([s[0][0] for s in samples] + [res["length"][0]])
    xs = np.array([s[1][0] for s in samples] + [res["exit_x"][0]])
    as_ = np.array([s[2][0] for s in samples] + [res["exit_a"][0]])
    vs = metric.dual_grad_a(xs, as_)
    h_vals = 0.5 * metric.dual_norm_raw(xs, as_) ** 2
    seg = GeodesicSegment(
        t=ts, x=xs, v=vs, a=as_,
        entry_s=float(angle_of(x0)) if r0 > 1.0 - 1e-9 else None,
        exit_s=float(angle_of(res["exit_x"][0])),
        length=float(res["length"][0]),
        trapped=False,
        energy_drift=float(np.max(np.abs(h_vals - 0.5))),
        metric_spec=metric.to_spec(),
    )
    return seg


# ---------------------------------------------------------------------------
# chart <-> covector conversions

def covector_from_chart(metric, s, tau, inward=True):
    """Unit covector with prescribed pairing tau on the boundary tangent.

    Solves phi*(tau T + c N_in) = 1; the inward branch has c > 0 (its
    Legendre inverse enters the disc), the outward branch c < 0.
    Returns (x, alpha) arrays broadcast over the inputs.
    """
    s = np.asarray(s, float)
    tau = np.asarray(tau, float)
    s, tau = np.broadcast_arrays(s, tau)
    x = circle_point(s)
    T = circle_tangent(s)
    N = -x
    sign = 1.0 if inward else -1.0
    c = sign * np.sqrt(np.maximum(1.0 - tau**2, 1e-4))
    for _ in range(60):
        a = tau[..., None] * T + c[..., None] * N
        f = metric.dual_norm_raw(x, a) - 1.0
        df = np.sum(metric.dual_grad_a(x, a) * N, axis=-1)
        stepn = f / np.where(np.abs(df) < 1e-12, 1e-12, df)
        c = c - stepn
        if np.max(np.abs(f)) < 1e-14:
            break
    a = tau[..., None] * T + c[..., None] * N
    v = metric.dual_grad_a(x, a)
    comp = sign * np.sum(v * N, axis=-1)
    if np.any(comp < TANGENCY_FLOOR):
        raise DomainError("chart covector is tangential or on the wrong "
                          "branch")
    return x, a


def chart_from_exit(x_exit, a_exit):
    """Exit chart coordinates (s', tau') from an exit covector."""
    s1 = angle_of(x_exit)
    tau1 = np.sum(a_exit * circle_tangent(s1), axis=-1)
    return s1, tau1


def tau_range(metric, n_probe=128, margin=0.15):
    """Symmetric admissible tau interval for a rectangular chart grid."""
    s = np.linspace(0, 2 * np.pi, n_probe, endpoint=False)
    fwd, bwd = metric.boundary_tangent_norms(s)
    return (1.0 - margin) * float(np.min(np.minimum(fwd, bwd)))


# ---------------------------------------------------------------------------
# lens maps

def lens_map(metric, s, v_entry, step=DEFAULT_STEP):
    """Exit velocity of the geodesic entering at boundary parameter s."""
    x0 = circle_point(np.asarray(s, float))
    v = np.asarray(v_entry, float)
    nv = metric.norm(x0, v)
    v = v / nv[..., None] if v.ndim > 1 else v / nv
    inward = np.sum(v * (-x0), axis=-1)
    if np.any(inward < TANGENCY_FLOOR):
        raise DomainError("entry vector is tangential (inward component "
                          f"{float(np.min(inward)):.2e})")
    a0 = metric.legendre(x0, v)
    res = flow_to_boundary(metric, np.atleast_2d(x0), np.atleast_2d(a0),
                           step=step)
    if np.any(res["trapped"]):
        raise NumericError("lens map trajectory trapped")
    v_exit = metric.dual_grad_a(res["exit_x"], res["exit_a"])
    s_exit = angle_of(res["exit_x"])
    if np.asarray(s).ndim == 0:
        return float(s_exit[0]), v_exit[0]
    return s_exit, v_exit


def dual_lens_map(metric, n_s=64, n_tau=33, tau_margin=0.15,
                  step=DEFAULT_STEP):
    """Sample sigma = L o beta o L^{-1} on a rectangular (s, tau) grid."""
    tmax = tau_range(metric, margin=tau_margin)
    s = np.linspace(0, 2 * np.pi, n_s, endpoint=False)
    tau = np.linspace(-tmax, tmax, n_tau)
    sg, tg = np.meshgrid(s, tau, indexing="ij")
    x0, a0 = covector_from_chart(metric, sg.ravel(), tg.ravel())
    res = flow_to_boundary(metric, x0, a0, step=step)
    if np.any(res["trapped"]):
        raise NumericError(
            f"{int(res['trapped'].sum())} trapped trajectories in sigma grid")
    s1, tau1 = chart_from_exit(res["exit_x"], res["exit_a"])
    # store s_out continuously: ds in (0, 2pi)
    ds = np.mod(s1 - sg.ravel(), 2 * np.pi)
    s_out = (sg.ravel() + ds).reshape(sg.shape)
    return SigmaTable(s, tau, s_out, tau1.reshape(sg.shape),
                      metric_spec=metric.to_spec())


# ---------------------------------------------------------------------------
# shooting (two-point boundary value problems)

def _launch_state(metric, x0, psi):
    u = np.stack([np.cos(psi), np.sin(psi)], axis=-1)
    v0 = u / metric.norm(x0, u)[..., None]
    a0 = metric.legendre(x0, v0)
    return v0, a0


def shoot_batch(metric, x0, psi, step=DEFAULT_STEP, max_length=MAX_LENGTH):
    """Launch geodesics from x0 with direction angles psi; return exits."""
    v0, a0 = _launch_state(metric, x0, psi)
    res = flow_to_boundary(metric, x0, a0, step=step, max_length=max_length)
    res["s_exit"] = angle_of(res["exit_x"])
    res["v0"] = v0
    res["a0"] = a0
    return res

def connect_batch(metric, x0, s_target, psi0=None, step=DEFAULT_STEP,
                  tol=1e-11, max_iters=14):
    """Batched boundary-target shooting by secant iteration on the angle.

    x0: (B, 2) start points (boundary or interior); s_target: (B,)
    boundary parameters to hit.  Initial guess is the straight chord.
    Returns the converged shoot_batch result plus per-item residuals.
    """
    x0 = np.asarray(x0, float).reshape(-1, 2)
    s_target = np.asarray(s_target, float).ravel()
    B = x0.shape[0]
    if psi0 is None:
        chord = circle_point(s_target) - x0
        psi0 = np.arctan2(chord[:, 1], chord[:, 0])
    psi_a = np.array(psi0, float, copy=True)
    res_a = wrap_signed(shoot_batch(metric, x0, psi_a, step=step)["s_exit"]
                        - s_target)
    psi_b = psi_a + 1e-4
    out = shoot_batch(metric, x0, psi_b, step=step)
    res_b = wrap_signed(out["s_exit"] - s_target)
    for _ in range(max_iters):
        act = np.abs(res_b) >= tol
        if not np.any(act):
            break
        denom = res_b[act] - res_a[act]
        denom = np.where(np.abs(denom) < 1e-15,
                         np.where(denom >= 0, 1e-15, -1e-15), denom)
        psi_new = psi_b[act] - res_b[act] * (psi_b[act] - psi_a[act]) / denom
        psi_new = np.clip(psi_new, psi_b[act] - 0.5, psi_b[act] + 0.5)
        psi_a[act], res_a[act] = psi_b[act], res_b[act]
        psi_b[act] = psi_new
        sub = shoot_batch(metric, x0[act], psi_new, step=step)
        res_b[act] = wrap_signed(sub["s_exit"] - s_target[act])
        for key in ("exit_x", "exit_a", "v0", "a0"):
            out[key][act] = sub[key]
        out["length"][act] = sub["length"]
        out["trapped"][act] = sub["trapped"]
        out["s_exit"][act] = sub["s_exit"]
    out["residual"] = res_b
    out["psi"] = psi_b
    out["converged"] = np.abs(res_b) < 1e-8
    return out


def connect(metric, p, q, step=DEFAULT_STEP, multistart=False,
            record_every=1):
    """Unique geodesic segment from p to q (both in the closed disc).

    Boundary targets are hit by angle shooting; for interior targets
    with a reversible metric the problem is solved backwards.  The
    returned segment's length is d(p, q).
    """
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    if np.allclose(p, q):
        raise DomainError("connect requires distinct endpoints")
    rq = np.linalg.norm(q)
    if rq > 1.0 - 1e-9:
        res = _connect_to_boundary(metric, p, float(angle_of(q)), step,
                                   multistart)
        v0 = res["v0"][0]
        return integrate_geodesic(metric, p, v0, step=step,
                                  record_every=record_every)
    if np.linalg.norm(p) > 1.0 - 1e-9 and metric.reversible:
        rev = _connect_to_boundary(ReversedMetric(metric), q,
                                   float(angle_of(p)), step, multistart)
        seg = integrate_geodesic(ReversedMetric(metric), q, rev["v0"][0],
                                 step=step, record_every=record_every)
        # reverse the parametrization
        L = seg.length
        return GeodesicSegment(
            t=L - seg.t[::-1], x=seg.x[::-1], v=-seg.v[::-1],
            a=-seg.a[::-1], entry_s=seg.exit_s, exit_s=seg.entry_s,
            length=L, energy_drift=seg.energy_drift,
            metric_spec=metric.to_spec())
    raise DomainError("interior-to-interior connect requires a boundary "
                      "endpoint or a reversible metric")


def _connect_to_boundary(metric, p, s_target, step, multistart):
    out = connect_batch(metric, p[None], np.array([s_target]), step=step)
    if not out["converged"][0]:
        raise NumericError("shooting did not converge "
                           f"(residual {out['residual'][0]:.3e})",
                           residual=float(out["residual"][0]))
    if multistart:
        psis = out["psi"][0] + np.array([-0.6, -0.3, 0.3, 0.6])
        alt = connect_batch(metric, np.repeat(p[None], 4, axis=0),
                            np.full(4, s_target), psi0=psis, step=step)
        ok = alt["converged"]
        if np.any(ok & (np.abs(wrap_signed(alt["psi"] - out["psi"][0]))
                        > 1e-5)):
            raise NumericError("multiple shooting solutions: metric may "
                               "not be simple")
    return out


def distance(metric, x, y, step=DEFAULT_STEP):
    """d(x, y) via closed form when available, else shooting."""
    ex = metric.exact_distance(x, y)
    if ex is not None:
        return ex
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if np.linalg.norm(y) > 1.0 - 1e-9:
        out = connect_batch(metric, x[None], np.atleast_1d(angle_of(y)),
                            step=step)
        return float(out["length"][0])
    if np.linalg.norm(x) > 1.0 - 1e-9 and metric.reversible:
        out = connect_batch(ReversedMetric(metric), y[None],
                            np.atleast_1d(angle_of(x)), step=step)
        return float(out["length"][0])
    raise DomainError("unsupported distance configuration")


# ---------------------------------------------------------------------------
# boundary distance field

def _exact_bd_function(metric):
    """Closed-form or near-diagonal-model evaluator f(p, q), if any."""
    if metric.variant == "flat":
        def f(p, q):
            return 2.0 * np.abs(np.sin(0.5 * (np.asarray(q) - np.asarray(p))))
        return f
    if metric.variant == "randers":
        b = metric.drift

        def f(p, q):
            d = circle_point(q) - circle_point(p)
            return np.linalg.norm(d, axis=-1) + d @ b
        return f
    if metric.variant == "conformal":
        # Simpson average of the factor along the chord: exact to O(L^3)
        # near the diagonal, and a smooth base for the spline correction
        def f(p, q):
            a = circle_point(p)
            bpt = circle_point(q)
            L = np.linalg.norm(bpt - a, axis=-1)
            nodes = np.linspace(0.0, 1.0, 9)
            w = np.array([1, 4, 2, 4, 2, 4, 2, 4, 1], float) / 24.0
            acc = 0.0
            for ti, wi in zip(nodes, w):
                acc = acc + wi * metric.factor(a + ti * (bpt - a))
            return L * acc
        return f
    return None


def boundary_distance_field(metric, n_b=64, step=DEFAULT_STEP,
                            audit=False):
    """Fill the N x N boundary distance grid f(s_i, s_j).

    Uses the metric's closed form when available, otherwise batched
    shooting with chord warm starts.  f(p, p) = 0 exactly.
    """
    if audit:
        rep = simplicity_audit(metric, step=max(step, 2e-3))
        if not rep.passed:
            raise NumericError(f"simplicity audit failed: {rep.values}")
    s = np.linspace(0, 2 * np.pi, n_b, endpoint=False)
    exact = _exact_bd_function(metric)
    ex_closed = metric.exact_distance(np.zeros(2), np.ones(2) * 0.1)
    if ex_closed is not None:
        pg, qg = np.meshgrid(s, s, indexing="ij")
        vals = metric.exact_distance(circle_point(pg), circle_point(qg))
        np.fill_diagonal(vals, 0.0)
        return BoundaryField(s, vals, metric.to_spec(), exact=exact)

    pg, qg = np.meshgrid(s, s, indexing="ij")
    if metric.reversible:
        sel = np.triu(np.ones((n_b, n_b), bool), k=1)
    else:
        sel = ~np.eye(n_b, dtype=bool)
    p_flat = pg[sel]
    q_flat = qg[sel]
    out = connect_batch(metric, circle_point(p_flat), q_flat, step=step)
    bad = ~out["converged"]
    if np.any(bad):
        ij = np.argwhere(sel)[bad][:8]
        raise NumericError(f"connect failed at grid indices {ij.tolist()}")
    vals = np.zeros((n_b, n_b))
    vals[sel] = out["length"]
    if metric.reversible:
        vals = vals + vals.T
    return BoundaryField(s, vals, metric.to_spec(), exact=exact)


# ---------------------------------------------------------------------------
# radial fans: distance and direction data from one interior point

class NodeFan:
    """Geodesic fan from an interior point to the whole boundary.

    Shooting a uniform fan of launch angles gives, after sorting by exit
    footpoint, smooth periodic samples of s -> d(x, boundary(s)) and of
    s -> launch angle.  Simplicity makes the exit map monotone, so both
    interpolate cleanly.
    """

    def __init__(self, x, psi, s_exit, length):
        from scipy.interpolate import CubicSpline
        self.x = np.asarray(x, float)
        order = np.argsort(s_exit)
        s = s_exit[order]
        d = length[order]
        p = psi[order]
        # unwrap psi along increasing s so the spline sees a monotone branch
        p = np.unwrap(p - s) + s
        s_ext = np.concatenate([s, s[:1] + 2 * np.pi])
        self._d = CubicSpline(s_ext, np.concatenate([d, d[:1]]),
                              bc_type="periodic")
        p_ext = np.concatenate([p, p[:1] + 2 * np.pi])
        self._psi = CubicSpline(s_ext, p_ext)
        self._s0 = s[0]

    def _fold(self, s):
        return self._s0 + np.mod(np.asarray(s, float) - self._s0, 2 * np.pi)

    def distance(self, s, nu=0):
        """d(x, boundary(s)) and its s-derivatives."""
        return self._d(self._fold(s), nu=nu)

    def direction(self, s):
        """Unit launch direction at x of the geodesic exiting at s."""
        psi = self._psi(self._fold(s))
        return np.stack([np.cos(psi), np.sin(psi)], axis=-1)


class StraightFan:
    """Fan evaluator for metrics whose geodesics are Euclidean chords.

    Same interface as NodeFan, but everything is closed-form: no
    integration and no interpolation error.
    """

    def __init__(self, metric, x):
        self.metric = metric
        self.x = np.asarray(x, float)
        self._drift = getattr(metric, "drift", np.zeros(2))

    def distance(self, s, nu=0):
        s = np.asarray(s, float)
        ch = circle_point(s) - self.x
        if nu == 0:
            return self.metric.norm(self.x, ch)
        if nu == 1:
            grad = ch / np.linalg.norm(ch, axis=-1)[..., None] + self._drift
            return np.sum(grad * circle_tangent(s), axis=-1)
        h = 1e-6
        return (self.distance(s + h, nu - 1)
                - self.distance(s - h, nu - 1)) / (2 * h)

    def direction(self, s):
        ch = circle_point(np.asarray(s, float)) - self.x
        return ch / np.linalg.norm(ch, axis=-1)[..., None]


def build_node_fans(metric, xs, n_dirs=256, step=DEFAULT_STEP):
    """One batched integration sweep producing a NodeFan per point.

    Metrics with straight geodesics get closed-form StraightFan objects
    instead (no integration needed).
    """
    xs = np.asarray(xs, float).reshape(-1, 2)
    if metric.straight_geodesics:
        return [StraightFan(metric, x) for x in xs]
    n = xs.shape[0]
    psi = np.linspace(0, 2 * np.pi, n_dirs, endpoint=False)
    x0 = np.repeat(xs, n_dirs, axis=0)
    psis = np.tile(psi, n)
    res = shoot_batch(metric, x0, psis, step=step)
    if np.any(res["trapped"]):
        raise NumericError(f"{int(res['trapped'].sum())} trapped fan rays")
    # direction angles are normalized per metric in shoot_batch launches,
    # but the angle itself is the Euclidean direction angle
    s_exit = res["s_exit"].reshape(n, n_dirs)
    length = res["length"].reshape(n, n_dirs)
    return [NodeFan(xs[i], psi, s_exit[i], length[i]) for i in range(n)]


# ---------------------------------------------------------------------------
# simplicity audit

def simplicity_audit(metric, n_entries=12, n_fan=41, step=2e-3,
                     n_pairs=12, seed=0):
    """Numerical proxies for the simplicity conditions.

    (a) exit footpoint monotone in launch angle for each entry point,
    (b) near-tangent entries exit with short chords,
    (c) multistart shooting finds a single solution on random pairs.
    """
    rng = np.random.default_rng(seed)
    entries = np.linspace(0, 2 * np.pi, n_entries, endpoint=False)
    tilt = 0.12
    psis_rel = np.linspace(-np.pi / 2 + tilt, np.pi / 2 - tilt, n_fan)

    mono_margin = np.inf
    trapped_count = 0
    for s0 in entries:
        # launch angles measured from the inward normal
        base = np.arctan2(-np.sin(s0), -np.cos(s0))
        psi = base + psis_rel
        res = shoot_batch(metric, np.repeat(circle_point(s0)[None], n_fan,
                                            axis=0), psi, step=step)
        trapped_count += int(res["trapped"].sum())
        if res["trapped"].any():
            continue
        se = np.unwrap(res["s_exit"])
        dse = np.diff(se) / np.diff(psis_rel)
        if dse.size:
            if np.any(dse > 0) and np.any(dse < 0):
                mono_margin = 0.0
            else:
                mono_margin = min(mono_margin, float(np.min(np.abs(dse))))

    # (b) near-tangency: short exits
    tang = 0.05
    max_tang_len = 0.0
    for s0 in entries[::3]:
        base = np.arctan2(-np.sin(s0), -np.cos(s0))
        for sign in (-1, 1):
            psi = np.array([base + sign * (np.pi / 2 - tang)])
            res = shoot_batch(metric, circle_point(s0)[None], psi, step=step)
            if res["trapped"][0]:
                trapped_count += 1
            else:
                max_tang_len = max(max_tang_len, float(res["length"][0]))

    # (c) multistart uniqueness on random boundary pairs
    unique_ok = True
    for _ in range(n_pairs):
        s1, s2 = rng.uniform(0, 2 * np.pi, 2)
        if np.abs(wrap_signed(s1 - s2)) < 0.3:
            continue
        try:
            connect(metric, circle_point(s1), circle_point(s2), step=step,
                    multistart=True, record_every=0)
        except NumericError:
            unique_ok = False
            break

    convex_ok = max_tang_len < 20.0 * tang
    passed = (trapped_count == 0 and mono_margin > 0.05 and convex_ok
              and unique_ok)
    return Report("simplicity_audit", passed, {
        "monotonicity_margin": float(mono_margin if np.isfinite(mono_margin)
                                     else 0.0),
        "trapped_rays": trapped_count,
        "tangent_chord_length": max_tang_len,
        "multistart_unique": int(unique_ok),
    })
