"""Sampled fields on the boundary circle and its chart products.

Containers: boundary-distance grids on S x S, dual lens tables in the
canonical (s, tau) chart, and 1-forms on S x S minus the diagonal.
Interpolation is periodic cubic via padded RectBivariateSpline.
"""

from __future__ import annotations

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .errors import DomainError
from .metrics import wrap_angle

TWO_PI = 2.0 * np.pi


def wrap_signed(d):
    """Wrap an angle difference to (-pi, pi]."""
    return np.mod(np.asarray(d) + np.pi, TWO_PI) - np.pi


class PeriodicSpline2D:
    """Bicubic spline on a uniform grid, periodic in either axis.

    Periodic axes are padded by `pad` grid points on each side before
    fitting so that evaluation and derivatives are smooth across the
    seam.
    """

    def __init__(self, u, v, values, periodic_u=True, periodic_v=True,
                 period=TWO_PI, pad=6):
        u = np.asarray(u, float)
        v = np.asarray(v, float)
        z = np.asarray(values, float)
        if z.shape != (u.size, v.size):
            raise DomainError("values shape does not match grids")
        self.periodic_u = periodic_u
        self.periodic_v = periodic_v
        self.period = period
        if periodic_u:
            u = np.concatenate([u[-pad:] - period, u, u[:pad] + period])
            z = np.concatenate([z[-pad:], z, z[:pad]], axis=0)
        if periodic_v:
            v = np.concatenate([v[-pad:] - period, v, v[:pad] + period])
            z = np.concatenate([z[:, -pad:], z, z[:, :pad]], axis=1)
        self._lo_u, self._hi_u = u[0], u[-1]
        self._lo_v, self._hi_v = v[0], v[-1]
        self._sp = RectBivariateSpline(u, v, z, kx=3, ky=3, s=0)

    def _fold(self, w, periodic, lo, hi):
        w = np.asarray(w, float)
        if periodic:
            w = np.mod(w, self.period)
        return np.clip(w, lo, hi)

    def ev(self, u, v, du=0, dv=0):
        uu = self._fold(u, self.periodic_u, self._lo_u, self._hi_u)
        vv = self._fold(v, self.periodic_v, self._lo_v, self._hi_v)
        uu, vv = np.broadcast_arrays(uu, vv)
        out = self._sp.ev(uu.ravel(), vv.ravel(), dx=du, dy=dv)
        return out.reshape(uu.shape)


class PeriodicSpline1D:
    """Cubic spline on a uniform periodic grid."""

    def __init__(self, u, values, period=TWO_PI, pad=6):
        from scipy.interpolate import CubicSpline
        u = np.asarray(u, float)
        z = np.asarray(values, float)
        self.period = period
        up = np.concatenate([u[-pad:] - period, u, u[:pad] + period])
        zp = np.concatenate([z[-pad:], z, z[:pad]], axis=0)
        self._sp = CubicSpline(up, zp, axis=0)

    def __call__(self, u, nu=0):
        return self._sp(np.mod(np.asarray(u, float), self.period), nu=nu)


# ---------------------------------------------------------------------------

class BoundaryField:
    """Function on S x S sampled on a uniform N x N angular grid.

    `exact` is an optional closed-form/background evaluator used to keep
    the interpolation honest near the diagonal, where grid splines ring:
    the spline is fitted to (values - exact) which is smooth and small.
    """

    def __init__(self, s, values, metric_spec=None, exact=None,
                 diagonal_mask=None):
        self.s = np.asarray(s, float)
        self.values = np.asarray(values, float)
        n = self.s.size
        if self.values.shape != (n, n):
            raise DomainError("boundary field grid mismatch")
        self.metric_spec = dict(metric_spec or {})
        self.exact = exact
        self.diagonal_mask = diagonal_mask
        if exact is None:
            self._spline = PeriodicSpline2D(self.s, self.s, self.values)
            self._base = None
        else:
            pg, qg = np.meshgrid(self.s, self.s, indexing="ij")
            base = exact(pg, qg)
            self._spline = PeriodicSpline2D(self.s, self.s,
                                            self.values - base)
            self._base = exact

    @property
    def n(self):
        return self.s.size

    def __call__(self, p, q, dp=0, dq=0):
        out = self._spline.ev(p, q, du=dp, dv=dq)
        if self._base is not None:
            if dp == 0 and dq == 0:
                out = out + self._base(p, q)
            else:
                out = out + _fd_partial(self._base, p, q, dp, dq)
        return out

    def grid(self):
        return np.meshgrid(self.s, self.s, indexing="ij")

    def sup_diff(self, other):
        return float(np.max(np.abs(self.values - other.values)))


def _fd_partial(fn, p, q, dp, dq, h=1e-5):
    """Central-difference partials of a smooth closed-form background."""
    if dp == 1 and dq == 0:
        return (fn(p + h, q) - fn(p - h, q)) / (2 * h)
    if dp == 0 and dq == 1:
        return (fn(p, q + h) - fn(p, q - h)) / (2 * h)
    if dp == 1 and dq == 1:
        return (fn(p + h, q + h) - fn(p + h, q - h)
                - fn(p - h, q + h) + fn(p - h, q - h)) / (4 * h * h)
    if dp == 0 and dq == 2:
        h = 1e-4
        return (fn(p, q + h) - 2 * fn(p, q) + fn(p, q - h)) / (h * h)
    if dp == 2 and dq == 0:
        h = 1e-4
        return (fn(p + h, q) - 2 * fn(p, q) + fn(p - h, q)) / (h * h)
    raise DomainError(f"unsupported derivative order ({dp},{dq})")


class SigmaTable:
    """Sampled dual lens map in the canonical boundary chart.

    Grid over (s, tau) with s the boundary parameter and tau the value
    of the unit entry covector on the boundary tangent frame; values
    are the exit chart coordinates (s_out, tau_out).  s_out is stored
    as s + ds with ds continuous in (0, 2pi), which keeps the table
    smooth across the angular seam.
    """

    def __init__(self, s, tau, s_out, tau_out, metric_spec=None,
                 support_mask=None):
        self.s = np.asarray(s, float)
        self.tau = np.asarray(tau, float)
        self.s_out = np.asarray(s_out, float)
        self.tau_out = np.asarray(tau_out, float)
        shape = (self.s.size, self.tau.size)
        if self.s_out.shape != shape or self.tau_out.shape != shape:
            raise DomainError("sigma table grid mismatch")
        self.metric_spec = dict(metric_spec or {})
        self.support_mask = (np.zeros(shape, bool) if support_mask is None
                             else np.asarray(support_mask, bool))
        ds = self.s_out - self.s[:, None]
        self._ds_spline = PeriodicSpline2D(self.s, self.tau, ds,
                                           periodic_u=True, periodic_v=False)
        self._tau_spline = PeriodicSpline2D(self.s, self.tau, self.tau_out,
                                            periodic_u=True, periodic_v=False)

    @property
    def shape(self):
        return (self.s.size, self.tau.size)

    def apply(self, s, tau):
        """Interpolated sigma: (s, tau) -> (s_out, tau_out)."""
        ds = self._ds_spline.ev(s, tau)
        return wrap_angle(np.asarray(s) + ds), self._tau_spline.ev(s, tau)

    def apply_unwrapped(self, s, tau):
        """Like apply but s_out = s + ds without wrapping."""
        ds = self._ds_spline.ev(s, tau)
        return np.asarray(s) + ds, self._tau_spline.ev(s, tau)

    def jacobian(self, s, tau):
        """Interpolated chart Jacobian [[ds'/ds, ds'/dtau], [dtau'/ds, dtau'/dtau]]."""
        j00 = 1.0 + self._ds_spline.ev(s, tau, du=1)
        j01 = self._ds_spline.ev(s, tau, dv=1)
        j10 = self._tau_spline.ev(s, tau, du=1)
        j11 = self._tau_spline.ev(s, tau, dv=1)
        return j00, j01, j10, j11

    def with_values(self, s_out, tau_out, support_mask=None,
                    metric_spec=None):
        return SigmaTable(self.s, self.tau, s_out, tau_out,
                          metric_spec or self.metric_spec,
                          support_mask if support_mask is not None
                          else self.support_mask)


class OneFormField:
    """1-form a(p,q) dp + b(p,q) dq on S x S minus a diagonal band.

    Sampled on the same uniform angular grid in both factors; entries
    inside the diagonal band hold background values by construction.
    """

    def __init__(self, s, a, b, band_width, metric_spec=None):
        self.s = np.asarray(s, float)
        self.a = np.asarray(a, float)
        self.b = np.asarray(b, float)
        n = self.s.size
        if self.a.shape != (n, n) or self.b.shape != (n, n):
            raise DomainError("one-form grid mismatch")
        self.band_width = float(band_width)
        self.metric_spec = dict(metric_spec or {})

    def band_mask(self):
        """True where angular separation |p-q| < band_width."""
        pg, qg = np.meshgrid(self.s, self.s, indexing="ij")
        return np.abs(wrap_signed(pg - qg)) < self.band_width

    def off_band_mask(self, margin=0.0):
        pg, qg = np.meshgrid(self.s, self.s, indexing="ij")
        return np.abs(wrap_signed(pg - qg)) >= self.band_width + margin
