"""Positivity cones of eigenvalue vectors and their p-Laplace comparison index.

``Gamma^k = {sigma_1 >= 0, ..., sigma_k >= 0}``.  A cone ``Gamma`` is compared
with the p-Laplacian through the ray ``(-(n-1)/(p-1), 1, ..., 1)``, the
radial Hessian direction of ``G_p``: the index ``p_Gamma`` is the exponent
for which that ray lies on the boundary of the cone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional

import numpy as np
from scipy import ndimage
from scipy.optimize import brentq

from nlpotlab.measures import GridDomain


def _elementary(lam) -> np.ndarray:
    """All ``sigma_0 .. sigma_n`` of ``lam`` via the product recurrence.

    Expanding ``prod (1 + lam_i t)`` one factor at a time only adds products,
    so mixed signs never subtract nearly equal power sums.
    """
    lam = np.sort(np.asarray(lam, dtype=float))
    e = np.zeros(lam.size + 1)
    e[0] = 1.0
    for j, x in enumerate(lam, start=1):
        e[1 : j + 1] = e[1 : j + 1] + x * e[0:j]
    return e


def sigma_k(lam, k: int) -> float:
    """k-th elementary symmetric polynomial."""
    lam = np.asarray(lam, dtype=float).reshape(-1)
    if not 1 <= k <= lam.size:
        raise ValueError("need 1 <= k <= n")
    return float(_elementary(lam)[k])


def _exact_sigma(lam, k: int) -> Fraction:
    e = [Fraction(1)] + [Fraction(0)] * len(lam)
    for j, x in enumerate(lam, start=1):
        for i in range(j, 0, -1):
            e[i] += x * e[i - 1]
    return e[k]


def in_gamma_k(lam, k: int, tol: float = 1e-12) -> bool:
    """True iff ``sigma_j(lam) >= -tol * scale^j`` for ``j = 1..k``."""
    lam = np.asarray(lam, dtype=float).reshape(-1)
    if not 1 <= k <= lam.size:
        raise ValueError("need 1 <= k <= n")
    e = _elementary(lam)
    scale = float(np.max(np.abs(lam))) if lam.size else 0.0
    return all(e[j] >= -tol * scale**j for j in range(1, k + 1))


def p_gamma_k(n: int, k: int) -> Fraction:
    """``n(k-1)/(n-k) + 2`` as an exact rational."""
    if not 1 <= k or 2 * k > n:
        raise ValueError("need 1 <= k <= n/2")
    return Fraction(n * (k - 1), n - k) + 2


def boundary_ray(n: int, p: float) -> np.ndarray:
    """``(-(n-1)/(p-1), 1, ..., 1)``."""
    lam = np.ones(n)
    lam[0] = -(n - 1.0) / (p - 1.0)
    return lam


def ray_root_exact(n: int, k: int) -> Fraction:
    """The ray coordinate ``-(n-k)/k`` annihilating ``sigma_k``, checked exactly."""
    t = Fraction(-(n - k), k)
    if _exact_sigma([t] + [Fraction(1)] * (n - 1), k) != 0:
        raise ArithmeticError("ray root failed the exact check")
    return t


@dataclass(frozen=True)
class ConeSpec:
    """``Gamma^k`` (``k`` set) or a cone ``{F >= 0}`` with ``F`` a callback."""

    n: int
    k: Optional[int] = None
    F: Optional[Callable] = None
    name: str = ""

    def __post_init__(self):
        if (self.k is None) == (self.F is None):
            raise ValueError("give exactly one of k and F")
        if self.k is not None and not 1 <= self.k <= self.n:
            raise ValueError("need 1 <= k <= n")

    @classmethod
    def gamma(cls, n: int, k: int) -> "ConeSpec":
        return cls(n, k=k, name=f"Gamma^{k}")

    @classmethod
    def from_sigma(cls, n: int, k: int) -> "ConeSpec":
        """Boundary function ``sigma_k^{1/k}`` (sign kept), homogeneous of degree one."""

        def F(lam):
            s = sigma_k(lam, k)
            return math.copysign(abs(s) ** (1.0 / k), s)

        return cls(n, F=F, name=f"sigma_{k}")

    def boundary_value(self, lam) -> float:
        if self.F is not None:
            return float(self.F(np.asarray(lam, dtype=float)))
        e = _elementary(lam)
        return float(min(e[1 : self.k + 1]))

    def check_homogeneity(self, rays: int = 16, seed: int = 0, rtol: float = 1e-9) -> bool:
        """Spot-check ``F(t lam) = t F(lam)`` on random rays."""
        rng = np.random.default_rng(seed)
        for _ in range(rays):
            lam = rng.normal(size=self.n)
            t = float(rng.uniform(0.1, 10.0))
            a, b = self.boundary_value(t * lam), t * self.boundary_value(lam)
            if abs(a - b) > rtol * max(1.0, abs(b)):
                return False
        return True

    def contains(self, lam, tol: float = 1e-12) -> bool:
        if self.k is not None:
            return in_gamma_k(lam, self.k, tol)
        return self.boundary_value(lam) >= -tol


class ConeIndexUndefined(ValueError):
    """No sign change of the boundary function along the ray for p in (1, n]."""


def p_gamma_from_boundary(cone: ConeSpec, n: Optional[int] = None, xtol: float = 1e-13) -> float:
    """Root in ``(1, n]`` of ``p -> F(-(n-1)/(p-1), 1, ..., 1)`` by bracketed bisection."""
    n = cone.n if n is None else n
    f = lambda p: cone.boundary_value(boundary_ray(n, p))
    lo, hi = 1.0 + 1e-9, float(n)
    f_lo, f_hi = f(lo), f(hi)
    if f_hi == 0.0:
        return hi
    if f_lo * f_hi > 0:
        raise ConeIndexUndefined(f"cone index undefined in (1, {n}]")
    grid = np.linspace(lo, hi, 65)
    vals = np.array([f(p) for p in grid])
    if np.any(np.diff(np.sign(vals)) < 0):
        raise ConeIndexUndefined("boundary function is not monotone along the ray")
    return float(brentq(f, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=500))


def gk_normalizer(n: int, k: int, x, x0=None):
    """``|x - x0|^{2 - n/k}`` for k < n/2 and ``-log|x - x0|`` for k = n/2."""
    if not 1 <= k or 2 * k > n:
        raise ValueError("need 1 <= k <= n/2")
    x = np.asarray(x, dtype=float)
    x0 = np.zeros(x.shape[-1]) if x0 is None else np.asarray(x0, dtype=float)
    d = np.linalg.norm(x - x0, axis=-1)
    with np.errstate(divide="ignore"):
        out = -np.log(d) if 2 * k == n else d ** (2.0 - n / k)
    return float(out) if out.ndim == 0 else out


def exponent_identity(n: int, k: int) -> bool:
    """``(n - p)/(p - 1) = n/k - 2`` at ``p = p_{Gamma^k}`` (exact arithmetic)."""
    p = p_gamma_k(n, k)
    return (n - p) / (p - 1) == Fraction(n, k) - 2


def _ghosted(values: np.ndarray, domain: GridDomain) -> np.ndarray:
    """Pad one node layer per side: mirror images at mirror faces, edge copies elsewhere.

    Edge copies only feed boundary nodes, which are never reported.
    """
    out = np.asarray(values, dtype=float)
    for k, m in enumerate(domain.mirror):
        pad = [(0, 0)] * out.ndim
        pad[k] = (1, 0)
        out = np.pad(out, pad, mode="reflect" if m else "edge")
        pad[k] = (0, 1)
        out = np.pad(out, pad, mode="edge")
    return out


def nodal_hessians(values: np.ndarray, domain: GridDomain) -> np.ndarray:
    """Second-difference Hessians at every stored node, shape ``(*nodes, n, n)``."""
    g = _ghosted(values, domain)
    n = domain.dim
    h = domain.h
    H = np.empty(tuple(domain.node_shape) + (n, n))

    def shifted(offsets):
        return g[tuple(slice(1 + o, g.shape[a] - 1 + o) for a, o in enumerate(offsets))]

    center = shifted([0] * n)
    for a in range(n):
        e = [0] * n
        e[a] = 1
        H[..., a, a] = (shifted(e) - 2.0 * center + shifted([-v for v in e])) / h**2
        for b in range(a + 1, n):
            pp = [0] * n
            pp[a], pp[b] = 1, 1
            pm = [0] * n
            pm[a], pm[b] = 1, -1
            mixed = (shifted(pp) - shifted(pm) - shifted([-v for v in pm]) + shifted([-v for v in pp])) / (4 * h**2)
            H[..., a, b] = mixed
            H[..., b, a] = mixed
    return H


def hessian_cone_check(values: np.ndarray, k: int, domain: GridDomain, singular: Optional[np.ndarray] = None,
                       rtol: float = 1e-6) -> np.ndarray:
    """Node mask where ``-lambda(D^2 u)`` lies in ``Gamma^k``.

    Boundary nodes, and nodes whose stencil touches a declared singular node,
    stay False.  The tolerance band is ``rtol * |D^2 u|`` per node.  Mirror
    faces are handled by reflection, so the mask lives on the stored grid.
    """
    n = domain.dim
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    H = nodal_hessians(values, domain)
    lam = -np.linalg.eigvalsh(H)
    flat = lam.reshape(-1, n)
    scale = np.max(np.abs(flat), axis=1)
    e = np.zeros((flat.shape[0], n + 1))
    e[:, 0] = 1.0
    srt = np.sort(flat, axis=1)
    for j in range(n):
        x = srt[:, j : j + 1]
        e[:, 1 : j + 2] = e[:, 1 : j + 2] + x * e[:, 0 : j + 1]
    ok = np.all(e[:, 1 : k + 1] >= -rtol * scale[:, None] ** np.arange(1, k + 1), axis=1)
    mask = ok.reshape(domain.node_shape)
    bad = domain.boundary_mask.copy()
    if singular is not None:
        sing = np.asarray(singular, dtype=bool)
        grown = ndimage.binary_dilation(_ghosted(sing, domain) > 0.5, structure=np.ones((3,) * n, dtype=bool))
        bad |= grown[tuple(slice(1, -1) for _ in range(n))]
    return mask & ~bad
