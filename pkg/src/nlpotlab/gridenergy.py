"""Discrete p-Dirichlet energy on node grids and its minimizer.

Every cell carries 2^n corner stencils.  At a corner the gradient is built
from the forward differences along the n cell edges meeting there, and the
cell energy is the average of ``(|grad|^2 + eps^2)^{p/2}`` over its corners
times the cell volume.  For p = 2 this reproduces the standard 2n+1 point
Laplacian; for general p the corner average removes the directional bias of
one-sided stencils.  The residual ``(1/p) dE/du_j`` is the nodal mass of
``-Delta_p u``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import product
from typing import Optional

import numpy as np
from scipy import ndimage

from nlpotlab.measures import GridDomain

log = logging.getLogger(__name__)


class PEnergy:
    """``E(u) = sum_cells h^n 2^{-n} sum_corners (|grad_h u|^2 + eps^2)^{p/2}``.

    Values refer to the unfolded domain: mirrored grids are scaled by
    ``domain.mirror_factor``.
    """

    def __init__(self, domain: GridDomain, p: float, eps: float = 0.0):
        if not p > 1:
            raise ValueError("p must exceed 1")
        self.domain = domain
        self.p = float(p)
        self.eps2 = float(eps) ** 2
        n = domain.dim
        cells = domain.cells
        self._corners = []
        for bits in product((0, 1), repeat=n):
            corner = tuple(slice(b, b + c) for b, c in zip(bits, cells))
            partners = []
            for k in range(n):
                flipped = list(bits)
                flipped[k] ^= 1
                partners.append(tuple(slice(b, b + c) for b, c in zip(flipped, cells)))
            self._corners.append((corner, partners))
        self._weight = domain.mirror_factor * domain.h**n / 2**n
        self._inv_h2 = 1.0 / domain.h**2

    def _stencils(self, u):
        for corner, partners in self._corners:
            base = u[corner]
            diffs = [u[s] - base for s in partners]
            g2 = sum(d * d for d in diffs) * self._inv_h2
            yield corner, partners, diffs, g2

    def value(self, u, regularized: bool = True) -> float:
        eps2 = self.eps2 if regularized else 0.0
        half_p = 0.5 * self.p
        total = 0.0
        for _, _, _, g2 in self._stencils(u):
            total += float(np.sum((g2 + eps2) ** half_p))
        return self._weight * total

    def gradient(self, u, want_diag: bool = False):
        """Energy, gradient and (optionally) a Jacobi preconditioner diagonal."""
        n = self.domain.dim
        half_p = 0.5 * self.p
        grad = np.zeros_like(u)
        diag = np.zeros_like(u) if want_diag else None
        energy = 0.0
        for corner, partners, diffs, g2 in self._stencils(u):
            base = g2 + self.eps2
            energy += float(np.sum(base**half_p))
            # the flux |grad u|^{p-2} grad u vanishes with the gradient for every p > 1
            with np.errstate(divide="ignore"):
                w = np.where(base > 0, self.p * base ** (half_p - 1.0), 0.0) * self._inv_h2
            for s, d in zip(partners, diffs):
                wd = w * d
                grad[s] += wd
                grad[corner] -= wd
                if want_diag:
                    diag[s] += w
            if want_diag:
                diag[corner] += n * w
        energy *= self._weight
        grad *= self._weight
        if want_diag:
            diag *= self._weight
        return energy, grad, diag

    def residual(self, u) -> np.ndarray:
        """Nodal masses ``(1/p) dE/du_j`` of the unfolded domain, per stored node."""
        _, grad, _ = self.gradient(u)
        # a node on j mirror planes stands for 2^{-j} of the unfolded copies
        return grad / self.p * (2.0 ** self.domain.plane_count) / self.domain.mirror_factor


@dataclass
class MinimizeResult:
    u: np.ndarray
    objective: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)
    grad_norm: float = 0.0


def minimize(
    energy: PEnergy,
    u0: np.ndarray,
    free: np.ndarray,
    source: Optional[np.ndarray] = None,
    bounds: tuple = (None, None),
    tol: float = 1e-8,
    max_iter: int = 3000,
) -> MinimizeResult:
    """Minimize ``(1/p) E(u) - <source, u>`` over the ``free`` nodes.

    Preconditioned nonlinear conjugate gradients (Polak-Ribiere+) with a
    secant step along each direction, Armijo backtracking and projection onto
    ``bounds``.  Projection is a clipping of nodal values, which never
    increases the edge differences and hence never increases the energy.
    Stops when the free-node gradient norm falls below ``tol`` times its
    initial value.
    """
    p = energy.p
    lo, hi = bounds
    u = np.array(u0, dtype=float, copy=True)
    src = np.zeros_like(u) if source is None else source * energy.domain.mirror_factor

    def evaluate(v, diag=False):
        e, g, d = energy.gradient(v, want_diag=diag)
        obj = e / p - float(np.sum(src * v))
        g = g / p - src
        g[~free] = 0.0
        return obj, g, d

    def project(v):
        if lo is not None or hi is not None:
            np.clip(v, lo, hi, out=v)
        return v

    project(u)
    obj, g, diag = evaluate(u, diag=True)
    history = [obj]
    g0 = float(np.linalg.norm(g))
    if g0 == 0.0:
        return MinimizeResult(u, obj, 0, True, history, 0.0)
    precond = np.where(free, 1.0 / np.maximum(diag / p, 1e-300), 0.0)
    z = precond * g
    d = -z
    rz = float(np.sum(g * z))
    step_guess = 1.0
    converged = False
    it = 0
    gnorm = g0
    for it in range(1, max_iter + 1):
        slope = float(np.sum(g * d))
        if slope >= 0:
            d = -z
            slope = -rz
        # secant estimate of the minimizer along d
        tau = step_guess
        _, g_tau, _ = evaluate(u + tau * d)
        curv = (float(np.sum(g_tau * d)) - slope) / tau
        alpha = -slope / curv if curv > 0 else 2.0 * tau
        accepted = False
        for _ in range(40):
            trial = project(u + alpha * d)
            obj_t, g_t, diag_t = evaluate(trial, diag=(it % 20 == 0))
            if obj_t <= obj + 1e-4 * alpha * slope or obj_t < obj - 1e-15 * abs(obj):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            log.debug("line search stalled at iteration %d", it)
            break
        u = trial
        step_guess = alpha
        prev_obj, obj = obj, obj_t
        history.append(obj)
        if diag_t is not None:
            precond = np.where(free, 1.0 / np.maximum(diag_t / p, 1e-300), 0.0)
        z_prev, rz_prev = z, rz
        g = g_t
        # gradient restricted to nodes not held at an active bound
        active = np.zeros_like(free)
        if lo is not None:
            active |= (u <= lo) & (g > 0)
        if hi is not None:
            active |= (u >= hi) & (g < 0)
        g_eff = np.where(active, 0.0, g)
        gnorm = float(np.linalg.norm(g_eff))
        if gnorm <= tol * g0:
            converged = True
            break
        if abs(prev_obj - obj) <= 1e-15 * max(abs(obj), 1e-300) and gnorm <= 1e3 * tol * g0:
            converged = True
            break
        z = precond * g_eff
        rz = float(np.sum(g_eff * z))
        beta = max(0.0, (rz - float(np.sum(g_eff * z_prev))) / rz_prev) if rz_prev > 0 else 0.0
        d = -z + beta * d
        d[active] = 0.0
    return MinimizeResult(u, obj, it, converged, history, gnorm / g0)


def prolong(coarse: np.ndarray) -> np.ndarray:
    """Multilinear interpolation from a grid to its uniform 2x refinement."""
    # corners map to corners when grid_mode is off; the factor only fixes the shape
    zoom = [(2 * c - 1) / c for c in coarse.shape]
    return ndimage.zoom(coarse, zoom, order=1, mode="nearest", grid_mode=False)


def coarsen(domain: GridDomain) -> Optional[GridDomain]:
    """Every other node of ``domain``, or None if the cells are odd or too few."""
    if any(c % 2 or c < 8 for c in domain.cells):
        return None
    holes = None if domain.holes is None else domain.holes[tuple(slice(None, None, 2) for _ in domain.cells)]
    return GridDomain(domain.lower, tuple(c // 2 for c in domain.cells), 2 * domain.h, domain.mirror, holes)


def subsample(mask: np.ndarray) -> np.ndarray:
    return mask[tuple(slice(None, None, 2) for _ in mask.shape)]


def nodal_gradient(values: np.ndarray, domain: GridDomain) -> np.ndarray:
    """Central-difference gradient magnitude at nodes (one-sided at faces)."""
    grads = np.gradient(values, domain.h)
    if values.ndim == 1:
        grads = [grads]
    return np.sqrt(sum(g * g for g in grads))
