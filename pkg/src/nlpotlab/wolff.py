"""Wolff potentials ``W^mu_{1,p}(x, r) = int_0^r (mu(B(x,t)) / t^{n-p})^{1/(p-1)} dt/t``.

Point-like charges (atoms and grid subsample points) make ``mu(B(x, t))`` a
step function, integrated exactly with the antiderivative of the power law
between jump radii.  Radial parts are handled by Gauss quadrature on
log-spaced panels, split at every radius where the integrand has a kink.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from nlpotlab.measures import DyadicAnnuli, GridDomain, RadonMeasure, ball_mass

_PANEL_T, _PANEL_W = np.polynomial.legendre.leggauss(4)
_PANEL_T = 0.5 * (_PANEL_T + 1.0)
_PANEL_W = 0.5 * _PANEL_W

LOWER_CUTOFF = 1e-14


@dataclass(frozen=True)
class WolffParams:
    p: float
    n: int
    r0: float = 1.0
    nodes_per_decade: int = 64

    def __post_init__(self):
        if not 1.0 < self.p <= self.n:
            raise ValueError(f"need 1 < p <= n, got p={self.p}, n={self.n}")
        if not self.r0 > 0:
            raise ValueError("r0 must be positive")
        if self.nodes_per_decade < 4:
            raise ValueError("at least 4 quadrature nodes per decade")

    @property
    def kappa(self) -> float:
        """Decay exponent ``(n-p)/(p-1)`` of the fundamental solution."""
        return (self.n - self.p) / (self.p - 1.0)

    @property
    def conformal(self) -> bool:
        return self.p == self.n

    def power_integral(self, a, b):
        """``int_a^b t^{-kappa} dt/t`` (``log(b/a)`` when p = n)."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if self.conformal:
            with np.errstate(divide="ignore"):
                return np.log(b / a)
        k = self.kappa
        with np.errstate(divide="ignore"):
            return (a ** (-k) - b ** (-k)) / k

    def normalizer(self, dist: float) -> float:
        """``dist^{-kappa}`` for p < n and ``log(1/dist)`` for p = n."""
        if self.conformal:
            return math.log(1.0 / dist)
        return dist ** (-self.kappa)


@dataclass(frozen=True)
class FourTermSplit:
    term_far: float
    term_mid: float
    term_near: float
    term_inner: float
    i0: int
    delta: float
    breakpoints: tuple

    @property
    def total(self) -> float:
        return self.term_far + self.term_mid + self.term_near + self.term_inner


def _step_integral(params: WolffParams, d, cum, a: float, b: float) -> float:
    """Exact integral over [a, b] when ``mu(B(x, t)) = cum[k]`` on ``[d[k-1], d[k])``."""
    inner = d[(d > a) & (d < b)]
    edges = np.concatenate([[a], inner, [b]])
    lo, hi = edges[:-1], edges[1:]
    idx = np.searchsorted(d, lo * (1.0 + 1e-13), side="right")
    mass = cum[idx]
    live = mass > 0
    if not np.any(live):
        return 0.0
    if np.any(lo[live] == 0.0):
        return math.inf
    return float(np.sum(mass[live] ** (1.0 / (params.p - 1.0)) * params.power_integral(lo[live], hi[live])))


def _panel_nodes(a: float, b: float, per_decade: int) -> tuple:
    """Gauss nodes and weights on log-spaced panels covering [a, b]."""
    la, lb = math.log(a), math.log(b)
    panels = max(1, math.ceil(per_decade / len(_PANEL_T) * (lb - la) / math.log(10.0)))
    edges = np.linspace(la, lb, panels + 1)
    width = np.diff(edges)[:, None]
    s = edges[:-1, None] + width * _PANEL_T[None, :]
    w = width * _PANEL_W[None, :]
    return np.exp(s.ravel()), w.ravel()


def wolff_integral(mu: RadonMeasure, params: WolffParams, x, a: float, b: float) -> float:
    """``int_a^b (mu(B(x,t))/t^{n-p})^{1/(p-1)} dt/t`` for ``0 <= a <= b``."""
    if a < 0 or b < a:
        raise ValueError("need 0 <= a <= b")
    if b == a:
        return 0.0
    x = np.asarray(x, dtype=float)
    d, m = mu.jumps(x)
    cum = np.concatenate([[0.0], np.cumsum(m)])
    if a == 0.0 and len(d) and d[0] == 0.0:
        return math.inf
    if not mu.radial_parts:
        return _step_integral(params, d, cum, a, b)

    # Below the first radius where any radial part has mass, the integrand is
    # a pure step function.
    q = 1.0 / (params.p - 1.0)
    starts = []
    kinks = []
    for part in mu.radial_parts:
        dist = float(np.linalg.norm(x - part.center))
        starts.append(max(dist - part.r_max, 0.0))
        for r in part.radii:
            kinks.extend((abs(dist - r), dist + r))
    start = min(starts)
    total = 0.0
    if start > a:
        total += _step_integral(params, d, cum, a, min(start, b))
        a = min(start, b)
    a = max(a, LOWER_CUTOFF * params.r0)
    if b <= a:
        return total
    atom_d = np.array([np.linalg.norm(at.point - x) for at in mu.atoms if at.mass > 0])
    cuts = np.concatenate([atom_d, np.asarray(kinks)])
    cuts = np.unique(cuts[(cuts > a) & (cuts < b)])
    edges = np.concatenate([[a], cuts, [b]])
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi <= lo * (1.0 + 1e-14):
            continue
        t, w = _panel_nodes(lo, hi, params.nodes_per_decade)
        mass = cum[np.searchsorted(d, t, side="right")] + mu.continuous_ball_mass(x, t)
        total += float(np.sum(w * (np.maximum(mass, 0.0) * t ** (params.p - params.n)) ** q))
    return total


def wolff_potential(mu: RadonMeasure, params: WolffParams, x, r: Optional[float] = None) -> float:
    """``W^mu_{1,p}(x, r)`` with ``r = params.r0`` by default; ``inf`` at an atom."""
    r = params.r0 if r is None else r
    return wolff_integral(mu, params, x, 0.0, r)


def singular_ratio(mu: RadonMeasure, params: WolffParams, x, x0=None) -> float:
    """``|x-x0|^{(n-p)/(p-1)} W`` for p < n, ``W / log(1/|x-x0|)`` for p = n."""
    x = np.asarray(x, dtype=float)
    x0 = np.zeros_like(x) if x0 is None else np.asarray(x0, dtype=float)
    dist = float(np.linalg.norm(x - x0))
    if dist == 0.0:
        raise ValueError("x coincides with x0")
    if params.conformal and dist >= 1.0:
        raise ValueError("p = n needs |x - x0| < 1 so that log(1/|x - x0|) > 0")
    return wolff_potential(mu, params, x) / params.normalizer(dist)


def four_term_split(
    mu: RadonMeasure,
    params: WolffParams,
    x,
    i0: int = 8,
    delta: float = 0.1,
    x0=None,
) -> FourTermSplit:
    """Split ``W(x, r0)`` at ``(1-d)|x|, (1+d)|x|, 2^{i0}|x|`` (p < n) or
    ``(1-d)|x|, (1+d)|x|, (1+d)|x|^d`` (p = n), distances taken from ``x0``."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    x = np.asarray(x, dtype=float)
    x0 = np.zeros_like(x) if x0 is None else np.asarray(x0, dtype=float)
    dist = float(np.linalg.norm(x - x0))
    if params.conformal:
        outer = (1.0 + delta) * dist**delta
    else:
        outer = 2.0**i0 * dist
    cuts = ((1.0 - delta) * dist, (1.0 + delta) * dist, outer, params.r0)
    if not (0.0 < cuts[0] < cuts[1] < cuts[2] <= cuts[3]):
        raise ValueError(f"breakpoints out of order: {cuts}")
    inner = wolff_integral(mu, params, x, 0.0, cuts[0])
    near = wolff_integral(mu, params, x, cuts[0], cuts[1])
    mid = wolff_integral(mu, params, x, cuts[1], cuts[2])
    far = wolff_integral(mu, params, x, cuts[2], cuts[3])
    return FourTermSplit(far, mid, near, inner, i0, delta, cuts)


def far_term_bound(params: WolffParams, total_mass: float, dist: float, i0: int) -> float:
    """``(p-1)/(n-p) mu(Omega)^{1/(p-1)} (2^{i0}|x|)^{-(n-p)/(p-1)}`` (p < n)."""
    return total_mass ** (1.0 / (params.p - 1.0)) * (2.0**i0 * dist) ** (-params.kappa) / params.kappa


def exclusion_threshold(params: WolffParams, dist, weight: float):
    """Level above which the truncated Wolff potential puts a point in ``E_i``."""
    dist = np.asarray(dist, dtype=float)
    if params.conformal:
        return weight ** (-1.0 / (params.n - 1.0)) * np.log(1.0 / dist)
    return weight ** (-1.0 / (params.p - 1.0)) * dist ** (-params.kappa)


def exclusion_points(
    mu: RadonMeasure,
    params: WolffParams,
    points,
    weight: float,
    delta: float = 0.1,
    x0=None,
) -> np.ndarray:
    """Boolean flags: ``W(x, (1-delta)|x-x0|) >= threshold`` at each point."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    x0 = np.zeros(pts.shape[1]) if x0 is None else np.asarray(x0, dtype=float)
    dist = np.linalg.norm(pts - x0, axis=1)
    level = exclusion_threshold(params, dist, weight)
    out = np.zeros(len(pts), dtype=bool)
    for k, (pt, rk) in enumerate(zip(pts, dist)):
        out[k] = wolff_integral(mu, params, pt, 0.0, (1.0 - delta) * rk) >= level[k]
    return out


def exclusion_set(
    mu: RadonMeasure,
    params: WolffParams,
    annuli: DyadicAnnuli,
    i: int,
    alpha_i: float,
    delta: float,
    sample_grid: GridDomain,
) -> np.ndarray:
    """Node mask of ``E_i`` on ``sample_grid``; nodes outside ``omega_i`` stay False."""
    if not alpha_i > 0:
        raise ValueError("weight must be positive")
    pts = sample_grid.points()
    inside = annuli.in_omega(pts, i)
    mask = np.zeros(len(pts), dtype=bool)
    if np.any(inside):
        mask[inside] = exclusion_points(mu, params, pts[inside], alpha_i, delta, annuli.center)
    return mask.reshape(sample_grid.node_shape)


def choose_weight_sequence(
    masses: Sequence[float],
    mode: str = "p",
    ceiling: float = 1e6,
    tail: float = 0.0,
) -> np.ndarray:
    """Weights ``alpha_i = (sum_{j>=i} m_j + tail)^{-1/2}`` capped at ``ceiling``.

    ``alpha_i -> inf`` as the tails vanish while
    ``sum alpha_i m_i <= 2 sum (sqrt(T_i) - sqrt(T_{i+1})) <= 2 sqrt(T_1)``.
    The same rule serves the ``gamma_i`` of the p = n case (``mode="n"``).
    """
    if mode not in ("p", "n"):
        raise ValueError("mode is 'p' or 'n'")
    m = np.asarray(masses, dtype=float)
    if np.any(m < 0) or tail < 0:
        raise ValueError("masses must be nonnegative")
    tails = np.cumsum(m[::-1])[::-1] + tail
    with np.errstate(divide="ignore"):
        alpha = np.where(tails > 0, 1.0 / np.sqrt(np.where(tails > 0, tails, 1.0)), ceiling)
    return np.minimum(alpha, ceiling)


def point_ball_masses(mu: RadonMeasure, x, radii) -> np.ndarray:
    return np.asarray(ball_mass(mu, x, np.asarray(radii, dtype=float)))
