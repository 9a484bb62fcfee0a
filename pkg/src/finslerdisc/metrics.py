"""Finsler norms on the unit disc: duals, Legendre transforms, convexity checks.

A metric is a positively 1-homogeneous, quadratically convex norm
``phi(x, v)`` on each tangent plane.  Everything downstream (geodesic
flow, reconstruction, lens charts) consumes the pointwise algebra
implemented here.  All operations broadcast over leading axes: ``x``
and ``v`` have shape ``(..., 2)``.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, DomainError, NumericError
from .reports import Report

# Tolerances: an order of magnitude above accumulated integrator error.
UNIT_TOL = 1e-8
DISTANCE_LIKE_TOL = 1e-6
CONVEXITY_FLOOR = 1e-4
ROUND_TRIP_TOL = 1e-8
BOUNDARY_TOL = 1e-9

# Relative central-difference step for fiber derivatives of 1/2 phi^2.
H_FIBER = 1e-5

_N_SCAN = 720
_N_NEWTON = 30


# ---------------------------------------------------------------------------
# boundary chart (n=2): s in [0, 2pi) parametrizes the unit circle

def circle_point(s):
    s = np.asarray(s, dtype=float)
    return np.stack([np.cos(s), np.sin(s)], axis=-1)


def circle_tangent(s):
    """Unit tangent frame d/ds of the boundary chart."""
    s = np.asarray(s, dtype=float)
    return np.stack([-np.sin(s), np.cos(s)], axis=-1)


def inward_normal(s):
    return -circle_point(s)


def wrap_angle(s):
    """Wrap to [0, 2pi)."""
    return np.mod(s, 2.0 * np.pi)


def angle_of(x):
    x = np.asarray(x, dtype=float)
    return wrap_angle(np.arctan2(x[..., 1], x[..., 0]))


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise DomainError("non-finite input")


def _dot(a, b):
    return np.sum(np.asarray(a) * np.asarray(b), axis=-1)


# ---------------------------------------------------------------------------

class Metric:
    """Base metric: generic solvers; variants override with closed forms.

    Values are immutable after construction; operations are pure, so
    instances are safe to share across workers.
    """

    variant = "abstract"
    reversible = False
    # metrics whose geodesics are Euclidean straight lines expose closed
    # forms that downstream solvers may use for fan construction
    straight_geodesics = False

    # -- norm and dual norm ------------------------------------------------

    def norm(self, x, v):
        raise NotImplementedError

    def norm_checked(self, x, v):
        v = np.asarray(v, dtype=float)
        _check_finite(x, v)
        if np.any(np.all(v == 0.0, axis=-1)):
            raise DomainError("norm of zero vector")
        return self.norm(x, v)

    def dual_norm(self, x, a):
        """sup of a(v) over the phi-unit sphere.

        Coarse angular scan plus Newton refinement on the stationarity
        condition; the unit sphere is quadratically convex so the
        maximizer is unique.
        """
        a = np.asarray(a, dtype=float)
        _check_finite(x, a)
        if np.any(np.all(a == 0.0, axis=-1)):
            raise DomainError("dual norm of zero covector")
        return self.dual_norm_raw(x, a)

    def _sphere_max(self, x, a, n_scan=_N_SCAN):
        """Maximize a(v) over the phi-unit fiber at x.

        Returns (max value, maximizing unit vector).  Vectorized over
        leading axes of x/a.
        """
        x = np.asarray(x, dtype=float)
        a = np.asarray(a, dtype=float)
        x, a = np.broadcast_arrays(x, a)
        shape = x.shape[:-1]
        xf = x.reshape(-1, 2)
        af = a.reshape(-1, 2)

        psi = np.linspace(0.0, 2.0 * np.pi, n_scan, endpoint=False)
        u = np.stack([np.cos(psi), np.sin(psi)], axis=-1)  # (n,2)

        def g(ps):
            # a(v(ps)) with v the unit vector in direction ps
            uu = np.stack([np.cos(ps), np.sin(ps)], axis=-1)
            if ps.ndim == 2:
                xb, ab = xf[:, None, :], af[:, None, :]
            else:
                xb, ab = xf, af
            return np.sum(ab * uu, axis=-1) / self.norm(xb, uu)

        vals = g(np.broadcast_to(psi, (xf.shape[0], n_scan)))
        i0 = np.argmax(vals, axis=1)
        ps = psi[i0]

        h = 1e-6
        for _ in range(_N_NEWTON):
            gp = (g(ps + h) - g(ps - h)) / (2 * h)
            gpp = (g(ps + h) - 2 * g(ps) + g(ps - h)) / (h * h)
            bad = np.abs(gpp) < 1e-14
            step = np.where(bad, 0.0, gp / np.where(bad, 1.0, gpp))
            step = np.clip(step, -0.02, 0.02)
            ps = ps - step
            if np.max(np.abs(step)) < 1e-15:
                break

        uu = np.stack([np.cos(ps), np.sin(ps)], axis=-1)
        ph = self.norm(xf, uu)
        vmax = uu / ph[..., None]
        val = np.sum(af * vmax, axis=-1)
        if np.any(~np.isfinite(val)):
            raise NumericError("dual-norm refinement diverged")
        return val.reshape(shape), vmax.reshape(shape + (2,))

    # -- Legendre transform ------------------------------------------------

    def legendre(self, x, v):
        """Fiber derivative of 1/2 phi^2 at v.

        Non-unit inputs are normalized first and the output rescaled by
        homogeneity (degree 1).  For unit v the result alpha satisfies
        alpha(v) = 1 and phi*(alpha) = 1.
        """
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        _check_finite(x, v)
        nv = self.norm(x, v)
        if np.any(nv == 0.0) or np.any(np.all(v == 0.0, axis=-1)):
            raise DomainError("legendre of zero vector")
        vu = v / nv[..., None]
        return self._legendre_unit(x, vu) * nv[..., None]

    def _legendre_unit(self, x, vu):
        # central differences of 1/2 phi^2 on the fiber
        h = H_FIBER
        e0 = np.zeros_like(vu)
        e0[..., 0] = h
        e1 = np.zeros_like(vu)
        e1[..., 1] = h

        def q(w):
            return 0.5 * self.norm(x, w) ** 2

        g0 = (q(vu + e0) - q(vu - e0)) / (2 * h)
        g1 = (q(vu + e1) - q(vu - e1)) / (2 * h)
        return np.stack([g0, g1], axis=-1)

    def legendre_inverse(self, x, a):
        """Unique unit vector v with a(v) = 1 for phi*-unit a.

        Implemented as the maximizer of a over the phi-unit sphere (the
        same solver as dual_norm); rescaled by homogeneity for non-unit
        input.
        """
        a = np.asarray(a, dtype=float)
        if np.any(np.all(a == 0.0, axis=-1)):
            raise DomainError("legendre_inverse of zero covector")
        na, v = self._sphere_max(x, a)
        return v / na[..., None]

    def finsler_gradient(self, x, df):
        """Gradient of a distance-like function from its differential."""
        star = self.dual_norm(x, df)
        dev = np.max(np.abs(star - 1.0))
        if dev > DISTANCE_LIKE_TOL:
            raise ContractError(
                f"covector is not distance-like: |phi*-1| = {dev:.3e}")
        return self.legendre_inverse(x, df)

    # -- Hamiltonian data (for geodesic integration in cotangent vars) -----

    def dual_grad_a(self, x, a):
        """d phi*/d alpha; equals the unit velocity for phi*-unit alpha."""
        h = 1e-6
        e0 = np.zeros_like(a)
        e0[..., 0] = h
        e1 = np.zeros_like(a)
        e1[..., 1] = h
        g0 = (self.dual_norm_raw(x, a + e0) - self.dual_norm_raw(x, a - e0)) / (2 * h)
        g1 = (self.dual_norm_raw(x, a + e1) - self.dual_norm_raw(x, a - e1)) / (2 * h)
        return np.stack([g0, g1], axis=-1)

    def dual_grad_x(self, x, a):
        """d phi*/d x at fixed covector components."""
        h = 1e-6
        e0 = np.zeros_like(x)
        e0[..., 0] = h
        e1 = np.zeros_like(x)
        e1[..., 1] = h
        g0 = (self.dual_norm_raw(x + e0, a) - self.dual_norm_raw(x - e0, a)) / (2 * h)
        g1 = (self.dual_norm_raw(x + e1, a) - self.dual_norm_raw(x - e1, a)) / (2 * h)
        return np.stack([g0, g1], axis=-1)

    def dual_norm_raw(self, x, a):
        """dual_norm without input checking (hot path)."""
        val, _ = self._sphere_max(x, a)
        return val

    # -- checks ------------------------------------------------------------

    def check_quadratic_convexity(self, x, n_dirs=64):
        """Sample the fiber Hessian of 1/2 phi^2; report min eigenvalue."""
        x = np.asarray(x, dtype=float).reshape(-1, 2)
        psi = np.linspace(0.0, 2.0 * np.pi, n_dirs, endpoint=False)
        v = np.stack([np.cos(psi), np.sin(psi)], axis=-1)[None, :, :]
        v = np.broadcast_to(v, (x.shape[0], n_dirs, 2))
        xb = np.broadcast_to(x[:, None, :], v.shape)

        h = 1e-4

        def q(w):
            return 0.5 * self.norm(xb, w) ** 2

        e0 = np.array([h, 0.0])
        e1 = np.array([0.0, h])
        h00 = (q(v + e0) - 2 * q(v) + q(v - e0)) / h**2
        h11 = (q(v + e1) - 2 * q(v) + q(v - e1)) / h**2
        h01 = (q(v + e0 + e1) - q(v + e0 - e1)
               - q(v - e0 + e1) + q(v - e0 - e1)) / (4 * h**2)
        tr = h00 + h11
        det = h00 * h11 - h01**2
        disc = np.sqrt(np.maximum(tr**2 / 4 - det, 0.0))
        lam_min = tr / 2 - disc
        ip, idir = np.unravel_index(int(np.argmin(lam_min)), lam_min.shape)
        return Report(
            "quadratic_convexity",
            bool(lam_min[ip, idir] > CONVEXITY_FLOOR),
            {"min_eigenvalue": float(lam_min[ip, idir]),
             "worst_direction": float(psi[idir]),
             "floor": CONVEXITY_FLOOR},
        )

    # -- boundary data -----------------------------------------------------

    def boundary_tangent_norms(self, s):
        """(phi(T), phi(-T)) at the boundary point of parameter s."""
        p = circle_point(s)
        t = circle_tangent(s)
        return self.norm(p, t), self.norm(p, -t)

    def exact_distance(self, x, y):
        """Closed-form d(x, y) when available, else None."""
        return None

    def collar_depth(self, x):
        """Approximate forward distance from the boundary to x.

        Used only as a smooth collar coordinate for cutoffs, not as an
        exact distance.
        """
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        return 1.0 - r

    # -- serialization -----------------------------------------------------

    def to_spec(self):
        return {"variant": self.variant}

    def __repr__(self):
        items = ", ".join(f"{k}={v}" for k, v in self.to_spec().items()
                          if k != "variant")
        return f"{type(self).__name__}({items})"


class FlatMetric(Metric):
    """Euclidean norm; geodesics are chords of the disc."""

    variant = "flat"
    reversible = True
    straight_geodesics = True

    def norm(self, x, v):
        v = np.asarray(v, dtype=float)
        return np.linalg.norm(v, axis=-1)

    def dual_norm(self, x, a):
        a = np.asarray(a, dtype=float)
        _check_finite(a)
        if np.any(np.all(a == 0.0, axis=-1)):
            raise DomainError("dual norm of zero covector")
        return np.linalg.norm(a, axis=-1)

    def dual_norm_raw(self, x, a):
        return np.linalg.norm(np.asarray(a, dtype=float), axis=-1)

    def _legendre_unit(self, x, vu):
        return np.array(vu, dtype=float, copy=True)

    def legendre_inverse(self, x, a):
        a = np.asarray(a, dtype=float)
        if np.any(np.all(a == 0.0, axis=-1)):
            raise DomainError("legendre_inverse of zero covector")
        return a / np.linalg.norm(a, axis=-1)[..., None]

    def dual_grad_a(self, x, a):
        a = np.asarray(a, dtype=float)
        return a / np.linalg.norm(a, axis=-1)[..., None]

    def dual_grad_x(self, x, a):
        return np.zeros_like(np.broadcast_arrays(np.asarray(x, float),
                                                 np.asarray(a, float))[0])

    def exact_distance(self, x, y):
        return np.linalg.norm(np.asarray(y, float) - np.asarray(x, float),
                              axis=-1)


class RandersMetric(Metric):
    """phi(x, v) = |v| + b.v with a constant drift b, |b| < 1.

    Non-reversible; geodesics are straight lines (constant-coefficient
    Lagrangian) but forward/backward lengths differ.
    """

    variant = "randers"
    reversible = False
    straight_geodesics = True

    def __init__(self, drift):
        self.drift = np.asarray(drift, dtype=float)
        if self.drift.shape != (2,):
            raise DomainError("drift must be a 2-vector")
        if np.linalg.norm(self.drift) >= 1.0:
            raise DomainError("|drift| must be < 1")

    def norm(self, x, v):
        v = np.asarray(v, dtype=float)
        return np.linalg.norm(v, axis=-1) + v @ self.drift

    def _dual_closed(self, a):
        # phi*(a) = (sqrt((1-|b|^2)|a|^2 + (b.a)^2) - b.a) / (1-|b|^2)
        a = np.asarray(a, dtype=float)
        b = self.drift
        bb = 1.0 - b @ b
        ba = a @ b
        return (np.sqrt(bb * np.sum(a * a, axis=-1) + ba**2) - ba) / bb

    def dual_norm_raw(self, x, a):
        return self._dual_closed(a)

    def dual_grad_a(self, x, a):
        a = np.asarray(a, dtype=float)
        b = self.drift
        bb = 1.0 - b @ b
        ba = a @ b
        root = np.sqrt(bb * np.sum(a * a, axis=-1) + ba**2)
        return (bb * a + ba[..., None] * b) / (bb * root[..., None]) - b / bb

    def dual_grad_x(self, x, a):
        return np.zeros_like(np.broadcast_arrays(np.asarray(x, float),
                                                 np.asarray(a, float))[0])

    def exact_distance(self, x, y):
        d = np.asarray(y, float) - np.asarray(x, float)
        return np.linalg.norm(d, axis=-1) + d @ self.drift

    def collar_depth(self, x):
        # min over boundary p of d(p, x), closed-form objective
        x = np.asarray(x, dtype=float)
        s = np.linspace(0.0, 2 * np.pi, 256, endpoint=False)
        p = circle_point(s)
        d = self.exact_distance(p, x[..., None, :])
        # parabolic refinement of the discrete minimum keeps the collar
        # coordinate smooth enough for finite-difference gradients
        j = np.argmin(d, axis=-1)
        jm = np.take_along_axis(d, ((j - 1) % 256)[..., None], -1)[..., 0]
        j0 = np.take_along_axis(d, j[..., None], -1)[..., 0]
        jp = np.take_along_axis(d, ((j + 1) % 256)[..., None], -1)[..., 0]
        denom = jm - 2 * j0 + jp
        denom = np.where(np.abs(denom) < 1e-15, 1e-15, denom)
        return j0 - 0.125 * (jp - jm) ** 2 / denom

    def to_spec(self):
        return {"variant": self.variant,
                "drift_x": float(self.drift[0]),
                "drift_y": float(self.drift[1])}


class ConformalMetric(Metric):
    """phi(x, v) = lam(x) |v| with a Gaussian bump factor.

    lam(x) = 1 + amplitude * exp(-|x - center|^2 / width2).
    """

    variant = "conformal"
    reversible = True

    def __init__(self, amplitude=0.1, center=(0.0, 0.0), width2=0.1):
        self.amplitude = float(amplitude)
        self.center = np.asarray(center, dtype=float)
        self.width2 = float(width2)
        if self.width2 <= 0:
            raise DomainError("width2 must be positive")
        if self.amplitude <= -1.0:
            raise DomainError("conformal factor must stay positive")

    def factor(self, x):
        x = np.asarray(x, dtype=float)
        d = x - self.center
        return 1.0 + self.amplitude * np.exp(
            -np.sum(d * d, axis=-1) / self.width2)

    def factor_grad(self, x):
        x = np.asarray(x, dtype=float)
        d = x - self.center
        e = self.amplitude * np.exp(-np.sum(d * d, axis=-1) / self.width2)
        return (-2.0 / self.width2) * e[..., None] * d

    def norm(self, x, v):
        v = np.asarray(v, dtype=float)
        return self.factor(x) * np.linalg.norm(v, axis=-1)

    def dual_norm_raw(self, x, a):
        a = np.asarray(a, dtype=float)
        return np.linalg.norm(a, axis=-1) / self.factor(x)

    def _legendre_unit(self, x, vu):
        # Riemannian Legendre is metric contraction: alpha = lam^2 <v, .>
        lam = self.factor(x)
        return lam[..., None] ** 2 * np.asarray(vu, dtype=float)

    def legendre_inverse(self, x, a):
        a = np.asarray(a, dtype=float)
        if np.any(np.all(a == 0.0, axis=-1)):
            raise DomainError("legendre_inverse of zero covector")
        na = np.linalg.norm(a, axis=-1)
        lam = self.factor(x)
        return a / (lam * na)[..., None]

    def dual_grad_a(self, x, a):
        a = np.asarray(a, dtype=float)
        return a / (self.factor(x) * np.linalg.norm(a, axis=-1))[..., None]

    def dual_grad_x(self, x, a):
        a = np.asarray(a, dtype=float)
        lam = self.factor(x)
        return -(np.linalg.norm(a, axis=-1) / lam**2)[..., None] \
            * self.factor_grad(x)

    def collar_depth(self, x):
        # chord length times Simpson average of the factor; adequate as
        # a smooth collar coordinate (the factor is ~1 near the boundary)
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        r = np.minimum(r, 1.0 - 1e-12)
        p = x / np.maximum(r, 1e-12)[..., None]
        mid = 0.5 * (x + p)
        lam = (self.factor(x) + 4 * self.factor(mid) + self.factor(p)) / 6.0
        return (1.0 - r) * lam

    def to_spec(self):
        return {"variant": self.variant,
                "amplitude": self.amplitude,
                "center_x": float(self.center[0]),
                "center_y": float(self.center[1]),
                "width2": self.width2}


def metric_from_spec(spec):
    """Build a metric from a key=value mapping (CLI config blocks)."""
    variant = spec.get("variant")
    if variant == "flat":
        return FlatMetric()
    if variant == "randers":
        return RandersMetric([float(spec["drift_x"]), float(spec["drift_y"])])
    if variant == "conformal":
        return ConformalMetric(
            amplitude=float(spec.get("amplitude", 0.1)),
            center=(float(spec.get("center_x", 0.0)),
                    float(spec.get("center_y", 0.0))),
            width2=float(spec.get("width2", 0.1)))
    raise DomainError(f"unknown metric variant: {variant!r}")
