"""Singular asymptotics of p-superharmonic functions at an isolated point.

For ``-Delta_p u = mu`` near ``x0`` the limit of ``u / G_p(., x0)`` off a
thin exceptional set is ``m = (mu({x0}) / alpha_0)^{1/(p-1)}``.  Here ``m`` is
estimated from the monotone quantity
``m(r) = inf_{|x|=r} u / (G_p(r) - G_p(3 r0))`` on a dyadic ladder, and the
exceptional sets come from the truncated Wolff potential.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from nlpotlab.measures import DyadicAnnuli, RadonMeasure, annulus_mass, rescale_measure, sphere_area
from nlpotlab.plaplace import PSolution, _shift, solve_grid, solve_radial
from nlpotlab.wolff import WolffParams, choose_weight_sequence, exclusion_points, wolff_integral

log = logging.getLogger(__name__)


def fundamental_solution(n: int, p: float, x, x0=None):
    """``|x - x0|^{-(n-p)/(p-1)}`` for p < n and ``-log|x - x0|`` for p = n; ``inf`` at x0."""
    x = np.asarray(x, dtype=float)
    x0 = np.zeros(x.shape[-1]) if x0 is None else np.asarray(x0, dtype=float)
    d = np.linalg.norm(x - x0, axis=-1)
    return _green_of_radius(n, p, d)


def _green_of_radius(n: int, p: float, d):
    d = np.asarray(d, dtype=float)
    with np.errstate(divide="ignore"):
        if p == n:
            out = -np.log(d)
        else:
            out = d ** (-(n - p) / (p - 1.0))
    return float(out) if out.ndim == 0 else out


def alpha0(n: int, p: float) -> float:
    """``-Delta_p G_p = alpha_0 delta_0``."""
    if not 1.0 < p <= n:
        raise ValueError("need 1 < p <= n")
    if p == n:
        return sphere_area(n)
    return ((n - p) / (p - 1.0)) ** (p - 1.0) * sphere_area(n)


def point_charge_of_m(m: float, n: int, p: float) -> float:
    if m < 0:
        raise ValueError("m must be nonnegative")
    return alpha0(n, p) * m ** (p - 1.0)


def m_of_point_charge(charge: float, n: int, p: float) -> float:
    if charge < 0:
        raise ValueError("point charge must be nonnegative")
    return (charge / alpha0(n, p)) ** (1.0 / (p - 1.0))


def sphere_directions(n: int, count: Optional[int] = None, seed: int = 0) -> np.ndarray:
    """Quasi-uniform unit vectors from a scrambled Sobol sequence (``32^{n-1}`` by default)."""
    count = 32 ** (n - 1) if count is None else int(count)
    m = max(1, math.ceil(math.log2(count)))
    pts = qmc.Sobol(d=n, scramble=True, seed=seed).random_base2(m)[:count]
    g = ndtri(np.clip(pts, 1e-12, 1 - 1e-12))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def m_of_r(u: PSolution, x0, r: float, gamma0: float, directions: Optional[np.ndarray] = None,
           seed: int = 0) -> float:
    """``inf_{|x - x0| = r} u(x) / (G_p(r) - gamma0)``."""
    x0 = np.asarray(x0, dtype=float)
    denom = _green_of_radius(u.n, u.p, r) - gamma0
    if not denom > 0:
        raise ValueError("nonpositive denominator G_p(r) - gamma0")
    if r > u.max_radius():
        raise ValueError("sampling sphere leaves the domain")
    if u.is_radial and np.allclose(x0, u.center):
        return float(u.radial(r)) / denom
    dirs = sphere_directions(u.n, seed=seed) if directions is None else directions
    return float(np.min(u(x0 + r * dirs))) / denom


@dataclass
class AsymptoticFit:
    m_liminf: float
    m_excluded_limit: float
    radii: np.ndarray
    m_samples: np.ndarray
    exclusion_masks: dict
    point_charge: float
    c0: float
    spread: float
    conclusive: bool
    alphas: np.ndarray = field(default_factory=lambda: np.empty(0))
    monotone_violation: float = 0.0

    @property
    def m(self) -> float:
        return self.m_liminf


def _field_for(source, p: float, x0, r0: float, cells: int) -> PSolution:
    if isinstance(source, PSolution):
        return source
    mu = source
    if mu.is_radial_about(x0):
        return solve_radial(mu, p, 3.0 * r0, center=x0)
    from nlpotlab.capacity import ball_domain

    if np.any(x0 != 0):
        raise ValueError("grid solves of non-radial measures assume x0 = 0")
    return solve_grid(mu, p, ball_domain(3.0 * r0, cells, mu.dim, octant=False))


def estimate_m(
    source: Union[PSolution, RadonMeasure],
    p: float,
    x0=None,
    depth: int = 8,
    r0: float = 1.0 / 3.0,
    delta: float = 0.1,
    seed: int = 0,
    spread_tol: float = 0.05,
    exclusion_directions: int = 64,
    grid_cells: int = 64,
) -> AsymptoticFit:
    """Ladder estimate of ``m`` at ``x0`` down to radius ``2^{-depth}``.

    ``m_liminf`` is the smallest ``m(r)`` over the three deepest rungs.  The
    excluded limit averages ``u / (G_p - gamma0)`` over samples of the deepest
    annulus lying outside the exclusion set ``E_i``.
    """
    u = _field_for(source, p, np.zeros(source.dim if isinstance(source, RadonMeasure) else source.n)
                   if x0 is None else np.asarray(x0, dtype=float), r0, grid_cells)
    n = u.n
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
    mu = u.measure
    gamma0 = _green_of_radius(n, p, 3.0 * r0)
    top = max(1, math.ceil(-math.log2(min(3.0 * r0, u.max_radius()))) + 1)
    levels = list(range(top, depth + 1))
    if len(levels) < 3:
        raise ValueError("depth leaves fewer than three ladder rungs")
    if u.domain is not None:
        floor = 4.0 * u.domain.h
        levels = [i for i in levels if 2.0 ** (-i - 1) >= floor]
        if len(levels) < 3:
            raise ValueError("grid too coarse for the requested ladder")
    radii = np.array([2.0 ** (-i) for i in levels])
    dirs = sphere_directions(n, seed=seed)
    m_samples = np.array([m_of_r(u, x0, r, gamma0, dirs) for r in radii])
    m_liminf = float(np.min(m_samples[-3:]))
    violation = float(np.max(np.maximum(np.diff(m_samples), 0.0), initial=0.0))

    # exclusion sets with weights alpha_i from the annulus masses
    annuli = DyadicAnnuli(x0, levels[0], levels[-1])
    masses = [annulus_mass(mu, annuli, i) for i in levels]
    alphas = choose_weight_sequence(masses)
    params = WolffParams(p, n, r0=1.0)
    ex_dirs = sphere_directions(n, exclusion_directions, seed=seed + 1)
    radial_mu = mu.is_radial_about(x0)
    masks = {}
    ratios = {}
    for i, alpha in zip(levels, alphas):
        shells = 2.0 ** (-i) * np.array([0.5, 0.75, 1.0])
        pts = (x0 + shells[:, None, None] * ex_dirs[None, :, :]).reshape(-1, n)
        if mu.is_empty:
            flags = np.zeros(len(pts), dtype=bool)
        elif radial_mu:
            # W(x, (1-delta)|x|) depends on |x| only
            flags_r = exclusion_points(mu, params, x0 + shells[:, None] * np.eye(n)[0], alpha, delta, x0)
            flags = np.repeat(flags_r, len(ex_dirs))
        else:
            flags = exclusion_points(mu, params, pts, alpha, delta, x0)
        masks[i] = flags
        g = _green_of_radius(n, p, np.linalg.norm(pts - x0, axis=1)) - gamma0
        ratios[i] = u(pts) / g
    deepest = levels[-1]
    keep = ~masks[deepest]
    if np.any(keep):
        vals = ratios[deepest][keep]
        m_excl = float(np.mean(vals))
        spread = float((np.max(vals) - np.min(vals)) / max(abs(m_excl), 1e-300))
    else:
        m_excl, spread = math.nan, math.inf
    conclusive = spread <= spread_tol

    # lower envelope u >= m G_p - c0 over every sample taken
    c0 = 0.0
    for i in levels:
        shells = 2.0 ** (-i) * np.array([0.5, 0.75, 1.0])
        pts = (x0 + shells[:, None, None] * ex_dirs[None, :, :]).reshape(-1, n)
        gap = m_liminf * _green_of_radius(n, p, np.linalg.norm(pts - x0, axis=1)) - u(pts)
        c0 = max(c0, float(np.max(gap)))
    for r in radii:
        gap = m_liminf * _green_of_radius(n, p, r) - u(x0 + r * dirs)
        c0 = max(c0, float(np.max(gap)))
    if not conclusive:
        log.info("excluded-sample spread %.3g exceeds %.3g at annulus %d", spread, spread_tol, deepest)
    return AsymptoticFit(
        m_liminf=m_liminf,
        m_excluded_limit=m_excl,
        radii=radii,
        m_samples=m_samples,
        exclusion_masks=masks,
        point_charge=point_charge_of_m(max(m_liminf, 0.0), n, p),
        c0=c0,
        spread=spread,
        conclusive=conclusive,
        alphas=np.asarray(alphas),
        monotone_violation=violation,
    )


def lower_envelope_holds(u: PSolution, fit: AsymptoticFit, points, x0=None, slack: float = 1e-9) -> bool:
    """Check ``u >= m G_p - c0`` at ``points``."""
    pts = np.array(points, dtype=float, ndmin=2)
    x0 = np.zeros(u.n) if x0 is None else np.asarray(x0, dtype=float)
    g = _green_of_radius(u.n, u.p, np.linalg.norm(pts - x0, axis=1))
    return bool(np.all(u(pts) >= fit.m_liminf * g - fit.c0 - slack * (1.0 + np.abs(g))))


def rescaled_field(u: PSolution, r: float, s: float = 0.5, x0=None) -> PSolution:
    """``u_r(xi) = u(x0 + r xi) / G_p(r)`` on the annulus ``s <= |xi| <= 1/s``.

    For p < n the measure of ``u_r`` is exactly ``rescale_measure(mu, r)``;
    for p = n it carries the extra factor ``log(1/r)^{1-n}``.
    """
    if not r > 0:
        raise ValueError("r must be positive")
    if not 0 < s < 1:
        raise ValueError("s must lie in (0, 1)")
    n, p = u.n, u.p
    x0 = u.center if x0 is None else np.asarray(x0, dtype=float)
    if r / s > u.max_radius() * (1.0 + 1e-12):
        raise ValueError("rescaled annulus exits the domain")
    if p == n and r >= 1.0:
        raise ValueError("p = n rescaling needs r < 1")
    scale = _green_of_radius(n, p, r)
    measure = rescale_measure(_shifted(u.measure, -x0), r)
    if p == n:
        measure = measure.scaled(math.log(1.0 / r) ** (1.0 - n))

    def fn(xi):
        return u(x0 + r * np.asarray(xi, dtype=float)) / scale

    out = PSolution.from_function(fn, p, n, np.zeros(n), measure, R=1.0 / s)
    out.diagnostics = {"scale": r, "annulus": (s, 1.0 / s)}
    return out


def _shifted(mu: RadonMeasure, v) -> RadonMeasure:
    if mu.grid_parts:
        if np.any(v):
            raise ValueError("grid parts cannot be recentred")
        return mu
    return _shift(mu, v)


def average_wolff_diagnostic(mu_r: RadonMeasure, p: float, center, rho: float, samples: int = 256,
                             seed: int = 0) -> float:
    """Mean of ``W^{mu_r}(xi, 2 rho)`` over ``B(center, rho/4)`` (Sobol samples)."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    center = np.asarray(center, dtype=float)
    n = center.size
    params = WolffParams(p, n, r0=2.0 * rho)
    pts = _ball_samples(n, samples, seed) * (rho / 4.0) + center
    vals = [wolff_integral(mu_r, params, x, 0.0, 2.0 * rho) for x in pts]
    return float(np.mean(vals))


def _ball_samples(n: int, count: int, seed: int) -> np.ndarray:
    """Quasi-uniform points in the unit ball."""
    m = max(1, math.ceil(math.log2(count)))
    raw = qmc.Sobol(d=n + 1, scramble=True, seed=seed).random_base2(m)[:count]
    dirs = ndtri(np.clip(raw[:, :n], 1e-12, 1 - 1e-12))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return dirs * raw[:, n:] ** (1.0 / n)
