"""Metric reconstruction from a perturbed boundary distance function.

Given a simple background metric and a small admissible perturbation of
its boundary distance function, this module builds the blended
enveloping field

    F_blend(p, x) = h(x) * F(p, x) + (1 - h(x)) * G(p, x)

whose spatial differentials trace, at each interior point, the cosphere
of a new metric whose boundary distances realize the perturbed data.
F(p, x) = d(p, x) is the background distance field; G repairs a collar
neighborhood of the boundary from the perturbed data via the max
formula H_p; h is a smooth cutoff supported outside an inner collar.
The output metric coincides with the background both outside the collar
and in the inner collar, so all honest numerical work concentrates on
the blend annulus.
"""

from __future__ import annotations

import numpy as np

from .cosphere import CosphereMetric
from .errors import (ConfigError, ContractError, ConvexityError, DomainError,
                     NumericError, PerturbationTooLargeError, StageError)
from .fields import BoundaryField, wrap_signed
from .geodesics import (DEFAULT_STEP, ReversedMetric, build_node_fans,
                        connect_batch, covector_from_chart, flow_to_boundary,
                        integrate_geodesic, shoot_batch, simplicity_audit)
from .metrics import angle_of, circle_point, circle_tangent, wrap_angle
from .reports import Report

DEFAULT_EPS = 0.3
OVERLAP_TOL = 1e-5
DEGENERATE_GAP = 1e-9


# ---------------------------------------------------------------------------
# cutoff and bump profiles

def quintic_ramp(u):
    """C^2 ramp: 0 for u <= 0, 1 for u >= 1."""
    u = np.clip(np.asarray(u, float), 0.0, 1.0)
    return u**3 * (10.0 - 15.0 * u + 6.0 * u**2)


def quintic_ramp_deriv(u):
    u = np.asarray(u, float)
    inside = (u > 0.0) & (u < 1.0)
    uu = np.clip(u, 0.0, 1.0)
    return np.where(inside, 30.0 * uu**2 * (1.0 - uu) ** 2, 0.0)


def mollifier(u):
    """Smooth compactly supported bump: 1 at 0, 0 for |u| >= 1."""
    u = np.asarray(u, float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - ui**2))
    return out


# ---------------------------------------------------------------------------
# admissible boundary perturbations

class BoundaryPerturbation:
    """Perturbed boundary distance f_tilde with its admissibility data.

    eps_diag is the radius such that f_tilde = f whenever the
    background distance between the footpoints is below 5 * eps_diag.
    """

    def __init__(self, base, f_tilde, eps_diag=DEFAULT_EPS, budget=0.05,
                 bumps=None):
        if base.s.size != f_tilde.s.size or \
                np.max(np.abs(base.s - f_tilde.s)) > 1e-14:
            raise DomainError("base and perturbed fields use different grids")
        self.base = base
        self.f_tilde = f_tilde
        self.eps_diag = float(eps_diag)
        self.budget = float(budget)
        self.bumps = list(bumps or [])

        diff = f_tilde.values - base.values
        near = base.values < 5.0 * self.eps_diag
        if np.any(diff[near] != 0.0):
            raise ContractError(
                "perturbation does not vanish on the diagonal band "
                f"(max |diff| = {np.max(np.abs(diff[near])):.3e})")
        if np.any(np.diag(f_tilde.values) != 0.0):
            raise ContractError("perturbed field is nonzero on the diagonal")
        self.sup_diff = float(np.max(np.abs(diff)))
        if self.sup_diff > self.budget:
            raise PerturbationTooLargeError(
                f"sup |f_tilde - f| = {self.sup_diff:.3e} exceeds the "
                f"budget {self.budget:.3e}")

    @property
    def s(self):
        return self.base.s

    def diff_support_mask(self):
        return self.f_tilde.values != self.base.values

    @classmethod
    def from_bumps(cls, metric, base, bumps, eps_diag=DEFAULT_EPS,
                   budget=0.05):
        """Build f_tilde = f + sum of smooth ridge bumps.

        Each bump is a dict with keys p0, q0 (center pair on S x S),
        amplitude, width_diff (angular half-width across the q - p
        direction), optional width_sum (half-width along p + q; None
        means constant along the ridge) and optional symmetric (adds
        the transposed bump).  Bump profiles ride along the
        anti-diagonal because the collar blend differentiates the
        perturbation through the geodesic exit map: across-diagonal
        oscillation is what the cosphere convexity budget pays for,
        while along-ridge structure is nearly free.
        """
        bumps = [dict(b) for b in bumps]
        pert = _bump_sum(bumps)
        pg, qg = np.meshgrid(base.s, base.s, indexing="ij")
        vals = base.values + pert(pg, qg)
        if base.exact is not None:
            def exact(p, q, _base=base.exact):
                return _base(p, q) + pert(p, q)
        else:
            exact = None
        f_tilde = BoundaryField(base.s, vals, base.metric_spec, exact=exact)
        return cls(base, f_tilde, eps_diag=eps_diag, budget=budget,
                   bumps=bumps)

    def patch_regions(self):
        """Support regions of the unsymmetrized bump halves."""
        return [BandRegion(b["q0"] - b["p0"] - b["width_diff"],
                           b["q0"] - b["p0"] + b["width_diff"],
                           None if b.get("width_sum") is None
                           else (b["p0"] + b["q0"] - b["width_sum"],
                                 b["p0"] + b["q0"] + b["width_sum"]))
                for b in self.bumps]


def _bump_term(b, p, q):
    u = wrap_signed(q - p - (b["q0"] - b["p0"])) / b["width_diff"]
    out = b["amplitude"] * mollifier(u)
    ws = b.get("width_sum")
    if ws is not None:
        out = out * mollifier(wrap_signed(p + q - b["p0"] - b["q0"]) / ws)
    return out


def _bump_sum(bumps):
    def pert(p, q):
        p = np.asarray(p, float)
        q = np.asarray(q, float)
        out = np.zeros(np.broadcast(p, q).shape)
        for b in bumps:
            out = out + _bump_term(b, p, q)
            if b.get("symmetric"):
                out = out + _bump_term(b, q, p)
        return out
    return pert


class BandRegion:
    """Band around the anti-diagonal: q - p in an interval, optionally
    restricted in p + q.  Closed under the operations gamma_membership
    and the symmetrization flip need."""

    def __init__(self, diff_lo, diff_hi, sum_range=None):
        self.diff_lo = float(diff_lo)
        self.diff_len = float(np.mod(diff_hi - diff_lo, 2 * np.pi))
        self.sum_range = sum_range

    def contains(self, p, q):
        d = np.mod(np.asarray(q, float) - np.asarray(p, float)
                   - self.diff_lo, 2 * np.pi)
        ok = d <= self.diff_len
        if self.sum_range is not None:
            lo, hi = self.sum_range
            sm = np.mod(np.asarray(p, float) + np.asarray(q, float) - lo,
                        2 * np.pi)
            ok = ok & (sm <= np.mod(hi - lo, 2 * np.pi))
        return ok

    def transpose(self):
        return BandRegion(-self.diff_lo - self.diff_len + 0.0,
                          -self.diff_lo, self.sum_range)

    def __call__(self, p, q):
        return self.contains(p, q)


class ArcBox:
    """Product of two circular arcs in (p, q) space, with wrapping."""

    def __init__(self, p_lo, p_hi, q_lo, q_hi):
        self.p_lo = float(p_lo)
        self.p_len = float(np.mod(p_hi - p_lo, 2 * np.pi))
        self.q_lo = float(q_lo)
        self.q_len = float(np.mod(q_hi - q_lo, 2 * np.pi))

    def contains(self, p, q):
        dp = np.mod(np.asarray(p, float) - self.p_lo, 2 * np.pi)
        dq = np.mod(np.asarray(q, float) - self.q_lo, 2 * np.pi)
        return (dp <= self.p_len) & (dq <= self.q_len)

    def transpose(self):
        return ArcBox(self.q_lo, self.q_lo + self.q_len,
                      self.p_lo, self.p_lo + self.p_len)

    def __call__(self, p, q):
        return self.contains(p, q)


# ---------------------------------------------------------------------------
# boundary exit vectors and data-driven geodesics

def tilde_w(metric, pert, p, q):
    """Unit outward vector at boundary(q) whose Legendre transform
    restricts on the boundary tangent to d_q f_tilde(p, .)."""
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    tau = pert.f_tilde(p, q, dq=1)
    fwd, bwd = metric.boundary_tangent_norms(q)
    if np.any(tau >= fwd - 1e-9) or np.any(tau <= -bwd + 1e-9):
        raise PerturbationTooLargeError(
            "tangential derivative of f_tilde reaches conorm 1")
    x, a = covector_from_chart(metric, q, tau, inward=False)
    return metric.legendre_inverse(x, a)


def gamma_curve(metric, pert, p, q, step=DEFAULT_STEP, record_every=1):
    """Backward geodesic from boundary(q) with exit velocity tilde_w.

    Returned as a forward trajectory of the reversed metric: sample k
    sits at gamma(-t_k).
    """
    w = tilde_w(metric, pert, p, q)
    seg = integrate_geodesic(ReversedMetric(metric), circle_point(float(q)),
                             -w, step=step, record_every=record_every)
    return seg


# ---------------------------------------------------------------------------
# the max formula H_p and the collar function G

def _H_batch(metric, pert, fan, x, ps, n_scan=512, newton_iters=10):
    """H_p(x) for a batch of boundary parameters p, with maximizers and
    spatial differentials (envelope formula).

    Returns (values, y_star, alphas)."""
    ps = np.asarray(ps, float)
    y = np.linspace(0.0, 2 * np.pi, n_scan, endpoint=False)
    d = fan.distance(y)
    g = pert.f_tilde(ps[:, None], y[None, :]) - d[None, :]
    j = np.argmax(g, axis=1)
    y0 = y[j]
    dy = 2 * np.pi / n_scan
    ys = y0.copy()
    for _ in range(newton_iters):
        g1 = pert.f_tilde(ps, ys, dq=1) - fan.distance(ys, 1)
        g2 = pert.f_tilde(ps, ys, dq=2) - fan.distance(ys, 2)
        bad = g2 > -1e-10
        step = np.where(bad, 0.0, g1 / np.where(bad, 1.0, g2))
        ys = ys - np.clip(step, -2 * dy, 2 * dy)
        if np.max(np.abs(step)) < 1e-13:
            break
    off_bracket = np.abs(wrap_signed(ys - y0)) > 2.5 * dy
    if np.any(off_bracket):
        raise NumericError(
            f"degenerate H maximizer for {int(off_bracket.sum())} boundary "
            "parameters (refinement left its bracket)")
    vals = pert.f_tilde(ps, ys) - fan.distance(ys)
    dirs = fan.direction(ys)
    alphas = metric.legendre(np.broadcast_to(x, dirs.shape), dirs)
    return vals, ys, alphas


def H_p_eval(metric, pert, p, x, fan=None, n_dirs=256, step=DEFAULT_STEP):
    """Max formula H_p(x) = max over the boundary of f_tilde(p, .) - d(x, .)."""
    x = np.asarray(x, float)
    if fan is None:
        fan = build_node_fans(metric, x[None], n_dirs=n_dirs, step=step)[0]
    vals, _, _ = _H_batch(metric, pert, fan, x, np.atleast_1d(float(p)))
    return float(vals[0])


def _backward_fan(metric, x, n_dirs, step):
    """Fan giving d(boundary(s), x) and arrival directions at x."""
    if metric.reversible:
        return None  # forward fan doubles as the backward one
    return build_node_fans(ReversedMetric(metric), np.asarray(x, float)[None],
                           n_dirs=n_dirs, step=step)[0]


def collar_G(metric, pert, p, x, eps=DEFAULT_EPS, fan=None, fan_b=None,
             n_dirs=256, step=DEFAULT_STEP):
    """Two-branch collar function: background distance near p, H_p away.

    In the overlap annulus eps < d(p, x) < 2*eps both branches are
    computed and must agree within OVERLAP_TOL."""
    x = np.asarray(x, float)
    if fan is None:
        fan = build_node_fans(metric, x[None], n_dirs=n_dirs, step=step)[0]
    if fan_b is None:
        fan_b = fan if metric.reversible else \
            _backward_fan(metric, x, n_dirs, step)
    dpx = float(fan_b.distance(float(p)))
    if dpx < 1.5 * eps:
        if dpx > eps:
            h_val = H_p_eval(metric, pert, p, x, fan=fan)
            if abs(h_val - dpx) > OVERLAP_TOL:
                raise ContractError(
                    f"collar branches disagree by {abs(h_val - dpx):.3e} "
                    "(perturbation too large or collar too wide)")
        return dpx
    h_val = H_p_eval(metric, pert, p, x, fan=fan)
    if dpx < 2.0 * eps and abs(h_val - dpx) > OVERLAP_TOL:
        raise ContractError(
            f"collar branches disagree by {abs(h_val - dpx):.3e}")
    return h_val


# ---------------------------------------------------------------------------
# collar width validation

def validate_collar(metric, eps=DEFAULT_EPS, delta=None, n_probe=8,
                    step=DEFAULT_STEP):
    """Numerical substitute for the chord-geometry condition.

    Scans geodesic chords of length 3*eps and measures the minimum
    collar depth over the sub-arc at distance [eps, 2*eps] from the
    entry point; any admissible collar width must stay below that
    depth.  Returns the validated width (0.8 * bound when delta is
    None) or raises if the requested delta is too large.
    """
    if eps <= 0:
        raise ConfigError("eps must be positive")
    bound = np.inf
    target = 3.0 * eps
    for s0 in np.linspace(0, 2 * np.pi, n_probe, endpoint=False):
        base = np.arctan2(-np.sin(s0), -np.cos(s0))
        # secant in the launch angle for a chord of length 3 eps
        psi = base + (np.pi / 2 - 0.8 * eps)
        x0 = circle_point(s0)[None]
        r1 = shoot_batch(metric, x0, np.array([psi]), step=step)
        f1 = float(r1["length"][0]) - target
        psi2 = psi - 0.05
        for _ in range(30):
            r2 = shoot_batch(metric, x0, np.array([psi2]), step=step)
            f2 = float(r2["length"][0]) - target
            if abs(f2) < 1e-10 or abs(f2 - f1) < 1e-15:
                break
            psi, f1, psi2 = psi2, f2, psi2 - f2 * (psi2 - psi) / (f2 - f1)
        seg = integrate_geodesic(metric, circle_point(s0),
                                 np.array([np.cos(psi2), np.sin(psi2)]),
                                 step=step)
        sel = (seg.t >= eps) & (seg.t <= 2 * eps)
        if not np.any(sel):
            raise NumericError("collar validation chord too short")
        bound = min(bound, float(np.min(metric.collar_depth(seg.x[sel]))))
    if delta is None:
        return 0.8 * bound
    if delta >= bound:
        raise ConfigError(
            f"collar width {delta:.4f} violates the chord condition "
            f"(numerical bound {bound:.4f} for eps = {eps})")
    return float(delta)


# ---------------------------------------------------------------------------
# the blended enveloping field

class EnvelopingField:
    """Blend of the background distance field and the collar repair.

    Stores, for every blended grid node, the field values and the
    cosphere curve (spatial differentials over the boundary parameter
    grid).  Non-blended nodes carry a construction tag: 'background'
    outside the collar (h = 1) and 'collar' in the inner region
    (h = 0), where the construction provably reproduces the background
    cosphere.
    """

    TAG_BACKGROUND = 0
    TAG_COLLAR = 1
    TAG_BLENDED = 2

    def __init__(self, metric, pert, eps, delta, r_nodes, s_nodes, depth,
                 h_grid, tags, blended_ij, F_values, G_values, alphas,
                 grad_h, n_dirs, step):
        self.metric = metric
        self.pert = pert
        self.eps = float(eps)
        self.delta = float(delta)
        self.r_nodes = r_nodes
        self.s_nodes = s_nodes
        self.depth = depth
        self.h_grid = h_grid
        self.tags = tags
        self.blended_ij = blended_ij
        self.F_values = F_values
        self.G_values = G_values
        self.alphas = alphas
        self.grad_h = grad_h
        self.n_dirs = n_dirs
        self.step = step
        self._fan_cache = {}

    @property
    def p_grid(self):
        return self.pert.s

    def node_xy(self, i, j):
        return self.r_nodes[i] * circle_point(self.s_nodes[j])

    def blended_values(self, k):
        """(F_blend values over p, cosphere curve) for blended node k."""
        h = self.h_grid[self.blended_ij[k][0], self.blended_ij[k][1]]
        vals = h * self.F_values[k] + (1 - h) * self.G_values[k]
        return vals, self.alphas[k]

    def _fans_at(self, x):
        key = (round(float(x[0]), 12), round(float(x[1]), 12))
        if key not in self._fan_cache:
            fan = build_node_fans(self.metric, np.asarray(x, float)[None],
                                  n_dirs=self.n_dirs, step=self.step)[0]
            fan_b = fan if self.metric.reversible else \
                _backward_fan(self.metric, x, self.n_dirs, self.step)
            self._fan_cache[key] = (fan, fan_b)
        return self._fan_cache[key]

    def evaluate(self, p, x):
        """Honest off-grid evaluation of F_blend(p, x)."""
        x = np.asarray(x, float)
        h, _ = _cutoff(self.metric, x[None], self.eps, self.delta)
        h = float(h[0])
        fan, fan_b = self._fans_at(x)
        F = float(fan_b.distance(float(p)))
        if h == 1.0:
            return F
        G = collar_G(self.metric, self.pert, p, x, eps=self.eps, fan=fan,
                     fan_b=fan_b)
        return h * F + (1 - h) * G

    def derivative(self, p, x):
        """Honest off-grid spatial differential d_x F_blend(p, .)."""
        x = np.asarray(x, float)
        h, grad_h = _cutoff(self.metric, x[None], self.eps, self.delta)
        h = float(h[0])
        grad_h = grad_h[0]
        fan, fan_b = self._fans_at(x)
        F = float(fan_b.distance(float(p)))
        dF = self.metric.legendre(x, -fan_b.direction(float(p)))
        if h == 1.0:
            return dF
        if F < 1.5 * self.eps:
            G, dG = F, dF
        else:
            vals, _, alphas = _H_batch(self.metric, self.pert, fan, x,
                                       np.atleast_1d(float(p)))
            G, dG = float(vals[0]), alphas[0]
        return h * dF + (1 - h) * dG + (F - G) * grad_h


def _cutoff(metric, xs, eps, delta):
    """Cutoff h and its spatial gradient at the points xs (n, 2)."""
    xs = np.asarray(xs, float)
    delta0 = 0.4 * delta
    width = delta - delta0
    depth = metric.collar_depth(xs)
    u = (depth - delta0) / width
    h = quintic_ramp(u)
    fd = 1e-5
    e0 = np.array([fd, 0.0])
    e1 = np.array([0.0, fd])
    gd0 = (metric.collar_depth(xs + e0) - metric.collar_depth(xs - e0)) / (2 * fd)
    gd1 = (metric.collar_depth(xs + e1) - metric.collar_depth(xs - e1)) / (2 * fd)
    grad = (quintic_ramp_deriv(u) / width)[..., None] \
        * np.stack([gd0, gd1], axis=-1)
    return h, grad


def blend_F(metric, pert, eps=DEFAULT_EPS, delta=None, n_r=64, n_s=256,
            n_r_collar=24, n_dirs=256, step=2e-3, distance_like_budget=0.6):
    """Build the blended enveloping field on a polar grid.

    The radial grid concentrates n_r_collar of the n_r nodes in the
    collar band so the blend profile is resolved.
    """
    delta = validate_collar(metric, eps=eps, delta=delta, step=step)
    delta0 = 0.4 * delta

    depth_scale = 1.0  # collar depth per unit Euclidean depth, worst case
    s_probe = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    probe = 0.98 * circle_point(s_probe)
    depth_probe = metric.collar_depth(probe)
    depth_scale = float(np.max(depth_probe) / 0.02)
    r_band = 1.0 - 1.3 * delta * depth_scale

    n_int = n_r - n_r_collar
    r_int = (np.arange(n_int) + 0.5) / n_int * r_band
    r_col = r_band + (np.arange(n_r_collar) + 0.5) / n_r_collar \
        * (1.0 - r_band)
    r_nodes = np.concatenate([r_int, r_col])
    s_nodes = np.linspace(0, 2 * np.pi, n_s, endpoint=False)

    rg, sg = np.meshgrid(r_nodes, s_nodes, indexing="ij")
    xy = rg[..., None] * np.stack([np.cos(sg), np.sin(sg)], axis=-1)
    depth = metric.collar_depth(xy)
    h_grid, grad_h_grid = _cutoff(metric, xy.reshape(-1, 2), eps, delta)
    h_grid = h_grid.reshape(rg.shape)
    grad_h_grid = grad_h_grid.reshape(rg.shape + (2,))

    tags = np.full(rg.shape, EnvelopingField.TAG_BACKGROUND, dtype=int)
    tags[depth <= delta0] = EnvelopingField.TAG_COLLAR
    blended = (depth > delta0) & (depth < delta)
    tags[blended] = EnvelopingField.TAG_BLENDED
    blended_ij = np.argwhere(blended)

    xs = xy[blended]
    fans = build_node_fans(metric, xs, n_dirs=n_dirs, step=step)
    if metric.reversible:
        fans_b = fans
    else:
        fans_b = build_node_fans(ReversedMetric(metric), xs, n_dirs=n_dirs,
                                 step=step)

    p_grid = pert.s
    P = p_grid.size
    nb = xs.shape[0]
    F_values = np.zeros((nb, P))
    G_values = np.zeros((nb, P))
    alphas = np.zeros((nb, P, 2))
    grad_h = grad_h_grid[blended]
    worst_overlap = 0.0
    worst_dl = 0.0

    for k in range(nb):
        x = xs[k]
        fan, fan_b = fans[k], fans_b[k]
        F = fan_b.distance(p_grid)
        dF = metric.legendre(np.broadcast_to(x, (P, 2)),
                             -fan_b.direction(p_grid))
        Hv, _, dH = _H_batch(metric, pert, fan, x, p_grid)
        far = F > 1.5 * eps
        overlap = (F > eps) & (F < 2.0 * eps)
        if np.any(overlap):
            worst_overlap = max(worst_overlap,
                                float(np.max(np.abs(Hv - F)[overlap])))
        G = np.where(far, Hv, F)
        dG = np.where(far[:, None], dH, dF)
        F_values[k] = F
        G_values[k] = G
        hk = h_grid[blended_ij[k][0], blended_ij[k][1]]
        alphas[k] = hk * dF + (1 - hk) * dG \
            + (F - G)[:, None] * grad_h[k][None, :]
        # sanity: the cosphere must stay within the configured distance
        # of the background unit cosphere
        dl = np.max(np.abs(metric.dual_norm_raw(
            np.broadcast_to(x, (P, 2)), alphas[k]) - 1.0))
        worst_dl = max(worst_dl, float(dl))

    if worst_overlap > OVERLAP_TOL:
        raise ContractError(
            f"collar branch disagreement {worst_overlap:.3e} exceeds "
            f"{OVERLAP_TOL}")
    if worst_dl > distance_like_budget:
        raise PerturbationTooLargeError(
            f"blended cosphere deviates from the background by "
            f"{worst_dl:.3e} (budget {distance_like_budget})")

    field = EnvelopingField(metric, pert, eps, delta, r_nodes, s_nodes,
                            depth, h_grid, tags, blended_ij, F_values,
                            G_values, alphas, grad_h, n_dirs, step)
    field.overlap_residual = worst_overlap
    field.cosphere_deviation = worst_dl
    return field


# ---------------------------------------------------------------------------
# cosphere extraction

def envelope_to_metric(field, n_theta=128, convexity_floor=1e-3):
    """Convert the blended field into a cosphere-table metric.

    Each blended node's covector curve is re-parametrized by covector
    angle and stored as a polar radius relative to the background
    cosphere; other nodes are exactly background by construction.
    """
    from scipy.interpolate import CubicSpline

    metric = field.metric
    r_nodes = np.concatenate([[0.0], field.r_nodes, [1.0, 1.02]])
    s_nodes = field.s_nodes
    theta = np.linspace(0, 2 * np.pi, n_theta, endpoint=False)
    nr, ns = r_nodes.size, s_nodes.size
    ratio = np.ones((nr, ns, n_theta))
    blended_mask = np.zeros((nr, ns), bool)

    u_th = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    worst_convexity = np.inf
    worst_node = None
    curves = {}

    for k, (i, j) in enumerate(field.blended_ij):
        x = field.node_xy(i, j)
        alpha = field.alphas[k]
        beta = np.unwrap(np.arctan2(alpha[:, 1], alpha[:, 0]))
        winding = (beta[-1] - beta[0]) \
            + wrap_signed(beta[0] + 2 * np.pi - beta[-1])
        orient = np.sign(beta[-1] - beta[0])
        if orient < 0:
            alpha = alpha[::-1]
            beta = beta[::-1] * 1.0
            beta = np.unwrap(np.arctan2(alpha[:, 1], alpha[:, 0]))
        if not np.all(np.diff(beta) > 0):
            raise ConvexityError(
                f"cosphere curve at node ({i},{j}) is not injective "
                "(covector angle not monotone)")
        if abs(abs(winding) - 2 * np.pi) > 0.1:
            raise ConvexityError(
                f"cosphere curve at node ({i},{j}) does not wind once "
                f"(winding {winding:.3f})")
        rad = np.linalg.norm(alpha, axis=-1)
        beta_ext = np.concatenate([beta, beta[:1] + 2 * np.pi])
        rad_ext = np.concatenate([rad, rad[:1]])
        spline = CubicSpline(beta_ext, rad_ext, bc_type="periodic")
        th_fold = beta[0] + np.mod(theta - beta[0], 2 * np.pi)
        R = spline(th_fold)
        Rp = spline(th_fold, 1)
        Rpp = spline(th_fold, 2)
        kappa = (R**2 + 2 * Rp**2 - R * Rpp) / R**2
        m = float(np.min(kappa))
        if m < worst_convexity:
            worst_convexity = m
            worst_node = (int(i), int(j))
        r_bg = 1.0 / metric.dual_norm_raw(np.broadcast_to(x, (n_theta, 2)),
                                          u_th)
        ratio[i + 1, j] = R / r_bg
        blended_mask[i + 1, j] = True
        curves[(int(i), int(j))] = alpha

    if worst_convexity < convexity_floor:
        raise ConvexityError(
            f"cosphere convexity margin {worst_convexity:.3e} below floor "
            f"{convexity_floor} at node {worst_node}")

    phi = CosphereMetric(metric, r_nodes, s_nodes, theta, ratio,
                         blended_mask, reversible=False, curves=curves)
    phi.convexity_margin = worst_convexity
    phi.p_grid = field.p_grid
    return phi


# ---------------------------------------------------------------------------
# verification and the full pipelines

def verify_bd(phi_t, f_tilde, n_sub=24, step=2e-3):
    """Re-shoot boundary distances of the reconstructed metric.

    Fully independent of the enveloping construction: plain two-point
    shooting in the new metric, compared against f_tilde on a subgrid
    of the boundary grid.
    """
    n_b = f_tilde.s.size
    stride = max(n_b // n_sub, 1)
    idx = np.arange(0, n_b, stride)
    s_sub = f_tilde.s[idx]
    pg, qg = np.meshgrid(s_sub, s_sub, indexing="ij")
    off = ~np.eye(idx.size, dtype=bool)
    p_flat, q_flat = pg[off], qg[off]
    out = connect_batch(phi_t, circle_point(p_flat), q_flat, step=step)
    if np.any(~out["converged"]):
        raise NumericError(
            f"verification shooting failed for "
            f"{int((~out['converged']).sum())} pairs")
    ref = f_tilde.values[np.ix_(idx, idx)][off]
    err = np.abs(out["length"] - ref)
    return Report("verify_bd", True, {
        "sup_error": float(np.max(err)),
        "mean_error": float(np.mean(err)),
        "n_pairs": int(err.size),
    })


def reconstruct(metric, pert, eps=None, delta=None, n_r=64, n_s=256,
                n_r_collar=24, n_theta=128, n_dirs=256, step=2e-3,
                verify=True, n_verify=24):
    """Full Theorem-1-style pipeline: perturbed boundary data to metric."""
    eps = pert.eps_diag if eps is None else eps
    try:
        field = blend_F(metric, pert, eps=eps, delta=delta, n_r=n_r,
                        n_s=n_s, n_r_collar=n_r_collar, n_dirs=n_dirs,
                        step=step)
    except (ContractError, PerturbationTooLargeError, NumericError,
            ConfigError) as e:
        raise StageError("blend_F", e) from e
    try:
        phi_t = envelope_to_metric(field, n_theta=n_theta)
    except ConvexityError as e:
        raise StageError("envelope_to_metric", e) from e
    phi_t.field = field
    if verify:
        phi_t.report = verify_bd(phi_t, pert.f_tilde, n_sub=n_verify,
                                 step=step)
    return phi_t


# ---------------------------------------------------------------------------
# geodesic-cone membership and the reversible symmetrization

def gamma_membership(metric, U, x, v, step=DEFAULT_STEP):
    """Whether the maximal geodesic through (x, v) has footpoints in U.

    U is a predicate (p, q) -> bool, e.g. an ArcBox.
    """
    x = np.asarray(x, float)
    v = np.asarray(v, float)
    a = metric.legendre(x, v / metric.norm(x, v))
    fwd = flow_to_boundary(metric, x[None], a[None], step=step)
    bwd = flow_to_boundary(ReversedMetric(metric), x[None], -a[None],
                           step=step)
    if fwd["trapped"][0] or bwd["trapped"][0]:
        raise NumericError("membership trajectory trapped")
    q = float(angle_of(fwd["exit_x"][0]))
    p = float(angle_of(bwd["exit_x"][0]))
    return bool(U(p, q))


def _footpoints_batch(metric, xs, vs, step):
    """Boundary footpoints (p, q) of the geodesics through (x, v)."""
    a = metric.legendre(xs, vs / metric.norm(xs, vs)[..., None])
    fwd = flow_to_boundary(metric, xs, a, step=step)
    bwd = flow_to_boundary(ReversedMetric(metric), xs, -a, step=step)
    if np.any(fwd["trapped"]) or np.any(bwd["trapped"]):
        raise NumericError("membership trajectory trapped")
    return angle_of(bwd["exit_x"]), angle_of(fwd["exit_x"])


def flip_on_gamma(phi_t, box, membership_metric=None, step=2e-3):
    """Reverse the metric on the velocity cone of geodesics with
    footpoints in `box`: phi'(x, v) = phi_t(x, -v) there.

    At the cosphere level this replaces the affected arc of each node
    curve by the antipodal reflection of the opposite arc.  Membership
    is decided with the background geodesics; the perturbation vanishes
    smoothly at the cone boundary, so the two conventions agree there.
    """
    bg = membership_metric or phi_t.background
    if not bg.reversible:
        raise DomainError("symmetrization requires a reversible background")
    theta = phi_t.theta
    nt = theta.size
    if nt % 2:
        raise ConfigError("flip requires an even covector-angle grid")
    ratio = np.array(phi_t.ratio, copy=True)

    rows = np.flatnonzero(np.any(phi_t.blended_mask, axis=1))
    for i in rows:
        cols = np.flatnonzero(phi_t.blended_mask[i])
        xs = phi_t.r_nodes[i] * circle_point(phi_t.s_nodes[cols])
        xs_rep = np.repeat(xs, nt, axis=0)
        u = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        a = np.tile(u, (cols.size, 1))
        # background-unit velocities corresponding to the covector angles
        vs = bg.dual_grad_a(xs_rep, a)
        p, q = _footpoints_batch(bg, xs_rep, vs, step)
        mask = box.contains(p, q).reshape(cols.size, nt)
        half = nt // 2
        for c, j in enumerate(cols):
            rolled = np.roll(ratio[i, j], -half)
            ratio[i, j] = np.where(mask[c], rolled, ratio[i, j])

    return CosphereMetric(phi_t.background, phi_t.r_nodes, phi_t.s_nodes,
                          theta, ratio, phi_t.blended_mask, reversible=True,
                          curves=phi_t.curves)


def reconstruct_reversible(metric, pert, patches=None, step=2e-3, **cfg):
    """Symmetrization pipeline: reconstruct patch by patch, flipping the
    transposed cone after each step so the running metric stays
    reversible, while boundary distances are preserved."""
    if not metric.reversible:
        raise DomainError("background must be reversible")
    asym = np.max(np.abs(pert.f_tilde.values - pert.f_tilde.values.T))
    if asym > 1e-12:
        raise ContractError(f"perturbed field is not symmetric ({asym:.2e})")
    if patches is None:
        if not pert.bumps:
            raise ConfigError("no patches given and the perturbation "
                              "carries no bump structure")
        patches = pert.patch_regions()

    if not pert.bumps and patches:
        raise ConfigError("explicit patches require bump structure")

    current_metric = metric
    current_base = pert.base
    phi = None
    for b, region in zip(pert.bumps, patches):
        half = dict(b)
        half["symmetric"] = False
        step_pert = BoundaryPerturbation.from_bumps(
            current_metric, current_base, [half], eps_diag=pert.eps_diag,
            budget=pert.budget)
        phi = reconstruct(current_metric, step_pert, step=step,
                          verify=False, **cfg)
        # flipping the transposed cone turns the realized data into the
        # symmetrized bump while making the metric reversible
        phi = flip_on_gamma(phi, region.transpose(),
                            membership_metric=metric, step=step)
        sym = dict(b)
        sym["symmetric"] = True
        current_base = BoundaryPerturbation.from_bumps(
            metric, current_base, [sym], eps_diag=pert.eps_diag,
            budget=pert.budget).f_tilde
        current_metric = phi
    if phi is None:
        raise ConfigError("empty patch list")
    phi.report = verify_bd(phi, pert.f_tilde, step=step)
    phi.reversibility = phi.check_reversibility()
    return phi
