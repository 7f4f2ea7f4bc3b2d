"""Solutions of ``-Delta_p u = mu`` with zero boundary values.

Radial problems are reduced to the flux identity
``|S^{n-1}| r^{n-1} |u'(r)|^{p-1} = mu(B(0, r))`` and integrated from the
outer radius inwards.  Grid problems minimize ``(1/p) E(u) - <f, u>`` with the
energy of :mod:`nlpotlab.gridenergy` and nodal masses ``f`` of the measure.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import ndimage
from scipy.stats import qmc

from nlpotlab.gridenergy import PEnergy, coarsen, minimize, nodal_gradient, prolong
from nlpotlab.measures import Atom, GridDomain, RadialPart, RadonMeasure, sphere_area
from nlpotlab.wolff import WolffParams, wolff_integral

log = logging.getLogger(__name__)

_GL_T, _GL_W = np.polynomial.legendre.leggauss(8)
_GL_T = 0.5 * (_GL_T + 1.0)
_GL_W = 0.5 * _GL_W


# ---------------------------------------------------------------------------
# Radial solutions
# ---------------------------------------------------------------------------


class RadialProfile:
    """``u(r) = int_r^R (F(s) / s^{n-1})^{1/(p-1)} ds`` with ``F = mu(B(0,s)) / |S^{n-1}|``.

    A pure atom gives the closed form ``m (G_p(r) - G_p(R))``.  Otherwise the
    integral is tabulated on log-spaced nodes with Gauss panels split at the
    profile radii, and partial panels are integrated on demand.
    """

    def __init__(self, mu: RadonMeasure, p: float, R: float, per_decade: int = 24, r_min: float = 1e-12):
        self.mu = mu
        self.p = float(p)
        self.n = mu.dim
        self.R = float(R)
        self.area = sphere_area(self.n)
        self.atom = mu.atom_mass_at(np.zeros(self.n))
        self.q = 1.0 / (self.p - 1.0)
        self.pure_atom = not mu.radial_parts
        if not self.pure_atom:
            lo = r_min * self.R
            kinks = sorted({float(r) for part in mu.radial_parts for r in part.radii if lo < r < self.R})
            knots = [lo]
            for edge in kinks + [self.R]:
                count = max(1, math.ceil(per_decade * math.log10(edge / knots[-1])))
                knots.extend(np.geomspace(knots[-1], edge, count + 1)[1:])
            self.knots = np.asarray(knots)
            pieces = np.array([self._panel(a, b) for a, b in zip(self.knots[:-1], self.knots[1:])])
            # tail[k] = integral from knots[k] to R
            self.tail = np.concatenate([np.cumsum(pieces[::-1])[::-1], [0.0]])

    def flux(self, s):
        """``F(s) = mu(B(0, s)) / |S^{n-1}|``."""
        s = np.asarray(s, dtype=float)
        mass = self.atom + sum(part.cumulative_mass(s) for part in self.mu.radial_parts)
        return mass / self.area

    def slope(self, s):
        """``|u'(s)|``."""
        s = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore"):
            return (self.flux(s) / s ** (self.n - 1)) ** self.q

    def _panel(self, a: float, b: float) -> float:
        la, lb = math.log(a), math.log(b)
        s = np.exp(la + (lb - la) * _GL_T)
        return float(np.sum(_GL_W * (lb - la) * s * self.slope(s)))

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        scalar = r.ndim == 0
        r = np.atleast_1d(r)
        if self.pure_atom:
            out = self._atom_closed_form(r)
        else:
            out = np.empty_like(r)
            for k, rk in enumerate(r):
                out[k] = self._tabulated(rk)
        return float(out[0]) if scalar else out

    def _atom_closed_form(self, r):
        c = (self.atom / self.area) ** self.q
        rr = np.minimum(r, self.R)
        with np.errstate(divide="ignore"):
            if self.p == self.n:
                out = c * np.log(self.R / rr)
            else:
                k = (self.n - self.p) / (self.p - 1.0)
                out = c * (rr ** (-k) - self.R ** (-k)) / k
        if self.atom == 0.0:
            out = np.zeros_like(rr)
        return out

    def _tabulated(self, r: float) -> float:
        if r >= self.R:
            return 0.0
        if r <= 0.0:
            return math.inf if self.atom > 0 else float(self.tail[0])
        if r < self.knots[0]:
            return float(self.tail[0] + self._panel(r, self.knots[0]))
        k = int(np.searchsorted(self.knots, r, side="right")) - 1
        k = min(k, len(self.knots) - 2)
        if r == self.knots[k]:
            return float(self.tail[k])
        return float(self.tail[k + 1] + self._panel(r, self.knots[k + 1]))


@dataclass
class PSolution:
    """A nonnegative solution: radial about ``center``, nodal on ``domain``, or an
    analytic ``evaluator`` callable on points (test fixtures and rescaled fields)."""

    p: float
    n: int
    measure: RadonMeasure
    center: np.ndarray
    profile: Optional[Callable] = None
    R: Optional[float] = None
    domain: Optional[GridDomain] = None
    values: Optional[np.ndarray] = None
    converged: bool = True
    diagnostics: dict = field(default_factory=dict)
    evaluator: Optional[Callable] = None

    @classmethod
    def from_function(cls, fn: Callable, p: float, n: int, center=None, measure=None,
                      R: Optional[float] = None) -> "PSolution":
        """Wrap ``fn(points) -> values``; ``R`` bounds the radius where it is defined."""
        center = np.zeros(n) if center is None else np.asarray(center, dtype=float)
        measure = RadonMeasure.zero(n) if measure is None else measure
        return cls(p, n, measure, center, R=R, evaluator=fn)

    @property
    def is_radial(self) -> bool:
        return self.profile is not None

    def radial(self, r):
        if not self.is_radial:
            raise TypeError("not a radial solution")
        return self.profile(r)

    def __call__(self, points):
        pts = np.array(points, dtype=float, ndmin=2)
        if self.evaluator is not None:
            return np.asarray(self.evaluator(pts), dtype=float)
        if self.is_radial:
            return np.asarray(self.profile(np.linalg.norm(pts - self.center, axis=1)), dtype=float)
        dom = self.domain
        if not np.all(dom.contains(pts)):
            raise ValueError("evaluation point outside the solved domain")
        idx = (dom.fold(pts) - dom.lower) / dom.h
        return ndimage.map_coordinates(self.values, idx.T, order=1, mode="nearest")

    def max_radius(self) -> float:
        """Largest radius about ``center`` on which the field is available."""
        if self.domain is not None:
            dom = self.domain
            if any(dom.mirror):
                dom = dom.unfolded()
            inner = float(np.min(np.minimum(self.center - dom.lower, dom.upper - self.center)))
            if self.domain.holes is not None:
                holes = self.domain.holes
                if holes.any():
                    inner = min(inner, float(np.min(self.domain.orbit_distance(self.center)[holes])))
            return inner
        return math.inf if self.R is None else self.R

    def node_points(self) -> np.ndarray:
        if self.domain is None:
            raise TypeError("radial solutions have no nodes")
        return self.domain.points()


def solve_radial(mu: RadonMeasure, p: float, R: float, center=None) -> PSolution:
    """Radial solution in ``B(center, R)`` for a measure symmetric about ``center``."""
    n = mu.dim
    center = np.zeros(n) if center is None else np.asarray(center, dtype=float)
    if not 1.0 < p <= n:
        raise ValueError("need 1 < p <= n")
    if not R > 0:
        raise ValueError("outer radius must be positive")
    if not mu.is_radial_about(center):
        raise ValueError("measure is not radially symmetric about the center")
    shifted = _shift(mu, -center)
    profile = RadialProfile(shifted, p, R)
    return PSolution(p, n, mu, center, profile=profile, R=float(R))


def _shift(mu: RadonMeasure, v) -> RadonMeasure:
    return RadonMeasure(
        mu.dim,
        tuple(Atom(a.point + v, a.mass) for a in mu.atoms),
        tuple(RadialPart(r.center + v, r.radii, r.values) for r in mu.radial_parts),
    )


# ---------------------------------------------------------------------------
# Grid solutions
# ---------------------------------------------------------------------------


def _bump(s):
    """Normalized-later smooth bump ``exp(-1/(1-s^2))`` on ``s < 1``."""
    out = np.zeros_like(s)
    inside = s < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


def _on_mirror_planes(domain: GridDomain, point) -> bool:
    return all(not m or abs(point[k] - domain.lower[k]) <= 1e-12 for k, m in enumerate(domain.mirror))


def nodal_source(mu: RadonMeasure, domain: GridDomain, mollify: float = 3.0) -> np.ndarray:
    """Per-copy nodal masses ``f_j`` approximating ``mu`` on ``domain``.

    Atoms are spread by a normalized bump of radius ``mollify * h``; radial
    densities are sampled at nodes and rescaled to their exact mass inside
    the domain; grid parts deposit their subpoints with multilinear weights.
    """
    if mollify < 2.0:
        raise ValueError("mollification radius must be at least 2h")
    h = domain.h
    copies = domain.mirror_factor * domain.node_weight
    f = np.zeros(domain.node_shape)
    mirrored = any(domain.mirror)
    interior = ~domain.boundary_mask
    for atom in mu.atoms:
        if atom.mass == 0:
            continue
        if mirrored and not _on_mirror_planes(domain, atom.point):
            raise ValueError("atoms must lie on the mirror planes of a folded grid")
        w = _bump(domain.orbit_distance(atom.point) / (mollify * h)) * interior
        total = float(np.sum(w * copies))
        if total == 0.0:
            raise ValueError("atom outside the domain interior")
        f += atom.mass * w / total
    for part in mu.radial_parts:
        if mirrored and not _on_mirror_planes(domain, part.center):
            raise ValueError("radial parts must be centred on the mirror planes of a folded grid")
        w = part.density(domain.radius(part.center)) * h**domain.dim * interior
        total = float(np.sum(w * copies))
        if total > 0:
            f += part.mass * w / total
    for grid in mu.grid_parts:
        if mirrored:
            raise ValueError("grid parts need an unmirrored solve domain")
        pts, masses = grid.subpoints
        f += _deposit(domain, pts, masses)
    return f


def _deposit(domain: GridDomain, pts, masses) -> np.ndarray:
    out = np.zeros(domain.node_shape)
    rel = (pts - domain.lower) / domain.h
    base = np.floor(rel).astype(int)
    frac = rel - base
    shape = np.asarray(domain.cells)
    base = np.clip(base, 0, shape - 1)
    frac = rel - base
    if np.any((frac < -1e-9) | (frac > 1 + 1e-9)):
        raise ValueError("grid part extends outside the solve domain")
    for corner in np.ndindex(*(2,) * domain.dim):
        c = np.asarray(corner)
        w = np.prod(np.where(c, frac, 1.0 - frac), axis=1)
        np.add.at(out, tuple((base + c).T), w * masses)
    return out


def solve_grid(
    mu: RadonMeasure,
    p: float,
    domain: GridDomain,
    mollify: float = 3.0,
    eps: Optional[float] = None,
    tol: float = 1e-8,
    max_iter: int = 6000,
    multilevel: bool = True,
) -> PSolution:
    """Minimize ``(1/p) E(u) - <f, u>`` with ``u = 0`` on the boundary mask."""
    n = domain.dim
    if mu.dim != n:
        raise ValueError("dimension mismatch")
    if not 1.0 < p <= n:
        raise ValueError("need 1 < p <= n")
    eps = 1e-6 / domain.h if eps is None else eps
    f = nodal_source(mu, domain, mollify)
    free = ~domain.boundary_mask
    center = np.zeros(n)
    if not np.any(f):
        zero = np.zeros(domain.node_shape)
        return PSolution(p, n, mu, center, domain=domain, values=zero, diagnostics={"residual": 0.0, "iterations": 0})
    u0 = np.zeros(domain.node_shape)
    coarse = coarsen(domain) if multilevel else None
    if coarse is not None:
        try:
            sub = solve_grid(mu, p, coarse, mollify, 2.0 * eps, tol * 10, max_iter, True)
            u0 = np.maximum(prolong(sub.values), 0.0)
        except ValueError:
            pass
    u0[domain.boundary_mask] = 0.0
    energy = PEnergy(domain, p, eps)
    res = minimize(energy, u0, free, source=f * domain.node_weight, tol=tol, max_iter=max_iter)
    u = res.u
    r = energy.residual(u) - f
    r[domain.boundary_mask] = 0.0
    residual = float(np.max(np.abs(r)) / max(mu.total_mass, 1e-300))
    if not res.converged:
        log.warning("grid solve stopped after %d iterations (relative gradient %.2e)", res.iterations, res.grad_norm)
    diag = {"residual": residual, "iterations": res.iterations, "history": res.history,
            "source": f, "mollify": mollify}
    return PSolution(p, n, mu, center, domain=domain, values=u, converged=res.converged, diagnostics=diag)


def residual_mass(sol: PSolution, radius: float, center=None) -> float:
    """Mass of ``-Delta_p u`` carried by nodes within ``radius`` of ``center``."""
    if sol.is_radial:
        raise TypeError("residual masses are defined for nodal solutions")
    dom = sol.domain
    center = sol.center if center is None else np.asarray(center, dtype=float)
    r = PEnergy(dom, sol.p).residual(sol.values)
    r[dom.boundary_mask] = 0.0
    inside = dom.orbit_distance(center) <= radius
    return float(np.sum((r * dom.mirror_factor * dom.node_weight)[inside]))


# ---------------------------------------------------------------------------
# Estimates
# ---------------------------------------------------------------------------


def _ball_infimum(u: PSolution, x, r: float) -> float:
    if u.is_radial:
        # radial solutions decrease with the distance to the center
        d = float(np.linalg.norm(np.asarray(x) - u.center))
        return float(u.radial(min(d + r, u.R)))
    if u.evaluator is not None:
        # sampled infimum: a deterministic point cloud in the ball
        pts = qmc.Sobol(u.n, scramble=True, seed=0).random(1024) * 2.0 - 1.0
        pts = pts[np.linalg.norm(pts, axis=1) <= 1.0]
        return float(np.min(u(np.asarray(x, dtype=float) + r * pts)))
    dom = u.domain
    inside = dom.orbit_distance(x) <= r * (1.0 + 1e-12)
    return float(np.min(u.values[inside]))


def km_sandwich(u: PSolution, mu: RadonMeasure, p: float, x, r: float) -> tuple:
    """``(u(x) / W(x, r), u(x) / (inf_{B(x,r)} u + W(x, 2r)))``.

    A zero denominator with a positive numerator gives ``inf``; ``0/0`` gives
    ``nan`` (indeterminate).
    """
    x = np.asarray(x, dtype=float)
    params = WolffParams(p, mu.dim, r0=2.0 * r)
    ux = float(u(x)[0])
    w_r = wolff_integral(mu, params, x, 0.0, r)
    w_2r = wolff_integral(mu, params, x, 0.0, 2.0 * r)
    low = _ratio(ux, w_r)
    up = _ratio(ux, _ball_infimum(u, x, r) + w_2r)
    return low, up


def _ratio(a: float, b: float) -> float:
    if b == 0.0:
        return math.nan if a == 0.0 else math.inf
    return a / b


def summability_check(u: PSolution, p: float, R: float, s: float, q: float, center=None) -> tuple:
    """``(||u||_{L^s(B_R)}, ||grad u||_{L^q(B_R)})`` divided by ``ess inf_{B_R} u``."""
    n = u.n
    s_max = math.inf if p == n else n * (p - 1.0) / (n - p)
    q_max = n * (p - 1.0) / (n - 1.0)
    if not 0 < s < s_max:
        raise ValueError(f"s must lie in (0, {s_max})")
    if not 0 < q < q_max:
        raise ValueError(f"q must lie in (0, {q_max})")
    center = u.center if center is None else np.asarray(center, dtype=float)
    if u.is_radial:
        if 2.0 * R > u.R:
            raise ValueError("B(2R) must lie inside the domain")
        prof = u.profile
        area = sphere_area(n)
        knots = np.geomspace(1e-12 * R, R, 12 * 12 + 1)
        total_s = total_q = 0.0
        for a, b in zip(knots[:-1], knots[1:]):
            la, lb = math.log(a), math.log(b)
            t = np.exp(la + (lb - la) * _GL_T)
            w = _GL_W * (lb - la) * t * area * t ** (n - 1)
            total_s += float(np.sum(w * prof(t) ** s))
            total_q += float(np.sum(w * prof.slope(t) ** q))
        inf_u = float(prof(R))
    else:
        dom = u.domain
        dist = dom.orbit_distance(center)
        inside = dist <= R
        if np.any(dom.boundary_mask & (dist <= 2.0 * R)):
            raise ValueError("B(2R) must lie inside the domain")
        vol = dom.h**n * dom.mirror_factor * dom.node_weight
        total_s = float(np.sum((vol * u.values**s)[inside]))
        total_q = float(np.sum((vol * nodal_gradient(u.values, dom) ** q)[inside]))
        inf_u = float(np.min(u.values[inside]))
    return _ratio(total_s ** (1.0 / s), inf_u), _ratio(total_q ** (1.0 / q), inf_u)


def truncate(u: PSolution, c_hat: float, center=None) -> PSolution:
    """``min(u, (c_hat + 1) G(x))`` with ``G = |x|^{-(n-p)/(p-1)}`` (``-log|x|`` when p = n)."""
    if not c_hat >= 0:
        raise ValueError("c_hat must be nonnegative")
    center = u.center if center is None else np.asarray(center, dtype=float)
    n, p = u.n, u.p

    k = 0.0 if p == n else (n - p) / (p - 1.0)

    def barrier(r):
        with np.errstate(divide="ignore"):
            if p == n:
                return (c_hat + 1.0) * -np.log(r)
            return (c_hat + 1.0) * r ** (-k)

    def barrier_slope(r):
        with np.errstate(divide="ignore"):
            if p == n:
                return (c_hat + 1.0) / r
            return (c_hat + 1.0) * k * r ** (-k - 1.0)

    if u.is_radial:
        if np.any(center != u.center):
            raise ValueError("radial truncation needs the solution's own center")
        base = u.profile

        class _Truncated:
            def __call__(self, r):
                return np.minimum(base(r), barrier(np.asarray(r, dtype=float)))

            def slope(self, r):
                r = np.asarray(r, dtype=float)
                return np.where(base(r) <= barrier(r), base.slope(r), barrier_slope(r))

        return PSolution(p, n, u.measure, u.center, profile=_Truncated(), R=u.R,
                         diagnostics={"truncated": c_hat})
    r = u.domain.orbit_distance(center)
    values = np.minimum(u.values, barrier(r))
    return PSolution(p, n, u.measure, u.center, domain=u.domain, values=values, converged=u.converged,
                     diagnostics={"truncated": c_hat})
