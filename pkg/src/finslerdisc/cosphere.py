"""Metric defined by sampled cosphere curves on a polar grid.

The reconstruction pipeline produces, at each spatial node, the curve of
unit covectors (the cosphere) of the new metric.  This module stores
those curves as polar radii relative to the background cosphere and
evaluates the metric anywhere in the disc:

    ratio(r, s, theta) = R(r, s, theta) / R_background(r, s, theta)

where R is the polar radius of the cosphere in covector direction
theta at the node with polar coordinates (r, s).  Away from the blend
band the ratio is exactly 1 and evaluation delegates to the background
metric, which keeps the collar identity exact rather than within
interpolation error.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError
from .fields import PeriodicSpline2D
from .metrics import Metric, angle_of
from .reports import Report


class CosphereMetric(Metric):
    """MetricModel variant backed by a cosphere ratio table."""

    variant = "cosphere_table"

    def __init__(self, background, r_nodes, s_nodes, theta, ratio,
                 blended_mask, reversible=False, curves=None):
        self.background = background
        self.r_nodes = np.asarray(r_nodes, float)
        self.s_nodes = np.asarray(s_nodes, float)
        self.theta = np.asarray(theta, float)
        self.ratio = np.asarray(ratio, float)
        nr, ns, nt = (self.r_nodes.size, self.s_nodes.size, self.theta.size)
        if self.ratio.shape != (nr, ns, nt):
            raise DomainError("ratio table shape mismatch")
        self.blended_mask = np.asarray(blended_mask, bool)
        self.reversible = bool(reversible)
        # optional raw cosphere curves {(i, j): (p_grid, alphas)} kept for
        # serialization and diagnostics
        self.curves = curves or {}

        self._splines = [None] * nr
        self._active_rows = np.zeros(nr, bool)
        for i in range(nr):
            if np.any(np.abs(self.ratio[i] - 1.0) > 1e-14):
                self._splines[i] = PeriodicSpline2D(
                    self.s_nodes, self.theta, self.ratio[i])
                self._active_rows[i] = True
        if np.any(self._active_rows):
            lo = self.r_nodes[self._active_rows].min()
            idx = np.searchsorted(self.r_nodes, lo)
            self._r_switch = self.r_nodes[max(idx - 2, 0)]
        else:
            self._r_switch = np.inf

    # -- table interpolation ------------------------------------------------

    def _ratio_at(self, r, s, th):
        """4-point radial Lagrange combination of per-row (s, theta) splines."""
        r = np.asarray(r, float)
        s = np.asarray(s, float)
        th = np.asarray(th, float)
        r, s, th = np.broadcast_arrays(r, s, th)
        shape = r.shape
        rf, sf, tf = r.ravel(), s.ravel(), th.ravel()
        out = np.ones(rf.size)
        sel = rf >= self._r_switch
        if not np.any(sel):
            return out.reshape(shape)
        rs, ss, ts = rf[sel], sf[sel], tf[sel]
        i0 = np.clip(np.searchsorted(self.r_nodes, rs) - 2, 0,
                     self.r_nodes.size - 4)
        acc = np.zeros(rs.size)
        for k in range(4):
            ik = i0 + k
            rk = self.r_nodes[ik]
            w = np.ones(rs.size)
            for m in range(4):
                if m == k:
                    continue
                rm = self.r_nodes[i0 + m]
                w *= (rs - rm) / (rk - rm)
            # group queries by radial row to evaluate each spline once
            val = np.ones(rs.size)
            for row in np.unique(ik):
                sub = ik == row
                sp = self._splines[row]
                if sp is not None:
                    val[sub] = sp.ev(ss[sub], ts[sub])
            acc += w * val
        out[sel] = acc
        return out.reshape(shape)

    # -- Metric interface ---------------------------------------------------

    def dual_norm_raw(self, x, a):
        x = np.asarray(x, float)
        a = np.asarray(a, float)
        base = self.background.dual_norm_raw(x, a)
        r = np.linalg.norm(x, axis=-1)
        if np.all(r < self._r_switch):
            return base
        s = angle_of(x)
        th = np.arctan2(a[..., 1], a[..., 0])
        return base / self._ratio_at(r, s, th)

    def norm(self, x, v):
        """Support function of the cosphere curve.

        Coarse scan over the stored covector-angle grid followed by
        Newton refinement of the stationarity condition.
        """
        x = np.asarray(x, float)
        v = np.asarray(v, float)
        x, v = np.broadcast_arrays(x, v)
        shape = x.shape[:-1]
        xf = x.reshape(-1, 2)
        vf = v.reshape(-1, 2)
        r = np.linalg.norm(xf, axis=-1)
        out = self.background.norm(xf, vf)
        sel = r >= self._r_switch
        if np.any(sel):
            out[sel] = self._support(xf[sel], vf[sel])
        return out.reshape(shape)

    def _radius(self, xs, ss, th):
        th = np.asarray(th, float)
        if th.ndim == 2:
            xb = xs[:, None, :]
            rr = np.linalg.norm(xs, axis=-1)[:, None]
            sb = ss[:, None]
        else:
            xb = xs
            rr = np.linalg.norm(xs, axis=-1)
            sb = ss
        u = np.stack([np.cos(th), np.sin(th)], axis=-1)
        r_bg = 1.0 / self.background.dual_norm_raw(xb, u)
        return r_bg * self._ratio_at(rr, sb, th)

    def _support(self, xs, vs):
        ss = angle_of(xs)
        th_grid = self.theta

        def g(th):
            if th.ndim == 2:
                xb = xs[:, None, :]
                vb = vs[:, None, :]
            else:
                xb = xs
                vb = vs
            u = np.stack([np.cos(th), np.sin(th)], axis=-1)
            return self._radius(xs, ss, th) * np.sum(vb * u, axis=-1)

        vals = g(np.broadcast_to(th_grid, (xs.shape[0], th_grid.size)))
        th = th_grid[np.argmax(vals, axis=1)]
        h = 1e-5
        for _ in range(12):
            gp = (g(th + h) - g(th - h)) / (2 * h)
            gpp = (g(th + h) - 2 * g(th) + g(th - h)) / (h * h)
            bad = np.abs(gpp) < 1e-12
            step = np.where(bad, 0.0, gp / np.where(bad, 1.0, gpp))
            th = th - np.clip(step, -0.1, 0.1)
            if np.max(np.abs(step)) < 1e-14:
                break
        return g(th)

    def minkowski_norm_via_gauge(self, x, v):
        """Independent evaluation path: Minkowski functional of the dual.

        phi(v) = max over the unit cosphere of <alpha, v>, computed here
        by dense sampling of the stored curve (no Newton refinement);
        used to cross-check the support-function path.
        """
        x = np.asarray(x, float)
        v = np.asarray(v, float)
        th = np.linspace(0, 2 * np.pi, 4096, endpoint=False)
        xs = x.reshape(1, 2)
        ss = angle_of(xs)
        rad = self._radius(xs, ss, th[None, :])[0]
        u = np.stack([np.cos(th), np.sin(th)], axis=-1)
        return float(np.max(rad * (u @ v.reshape(2))))

    def collar_depth(self, x):
        return self.background.collar_depth(x)

    def check_reversibility(self, n_samples=200, seed=0):
        rng = np.random.default_rng(seed)
        r = np.sqrt(rng.uniform(0, 0.98, n_samples))
        th = rng.uniform(0, 2 * np.pi, n_samples)
        xs = np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)
        psi = rng.uniform(0, 2 * np.pi, n_samples)
        vs = np.stack([np.cos(psi), np.sin(psi)], axis=-1)
        res = np.abs(self.norm(xs, vs) - self.norm(xs, -vs))
        return Report("reversibility", bool(np.max(res) < 1e-6),
                      {"max_residual": float(np.max(res)),
                       "mean_residual": float(np.mean(res))})

    def to_spec(self):
        spec = {"variant": self.variant,
                "n_r": int(self.r_nodes.size),
                "n_s": int(self.s_nodes.size),
                "n_theta": int(self.theta.size),
                "reversible": int(self.reversible)}
        for k, v in self.background.to_spec().items():
            spec[f"background_{k}"] = v
        return spec
