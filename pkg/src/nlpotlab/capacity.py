"""Variational p-capacity of discretized condensers.

``cap_p(K, Omega) = inf { int_Omega |grad u|^p : u >= 1 on K, u = 0 on dOmega }``
is computed by minimizing the corner-stencil energy of
:mod:`nlpotlab.gridenergy` over nodal fields with ``u = 1`` on ``K`` and
``u = 0`` on the boundary mask.  The capacitary distribution is the nodal
residual ``-Delta_p u``, whose total mass equals the energy by
p-homogeneity.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy import ndimage

from nlpotlab.gridenergy import PEnergy, coarsen, minimize, prolong, subsample
from nlpotlab.measures import DyadicAnnuli, GridDomain, RadonMeasure, measure_from_nodal, sphere_area
from nlpotlab.parallel import parallel_map

log = logging.getLogger(__name__)

NEGATIVE_MASS_LIMIT = 0.02


class CapacityError(ValueError):
    """Ill-posed condenser (for instance ``K`` touching the outer boundary)."""


class ConvergenceError(RuntimeError):
    """A result that needs a converged solve was requested from an unconverged one."""


@dataclass(frozen=True, eq=False)
class CondenserProblem:
    domain: GridDomain
    inner_mask: np.ndarray
    p: float
    eps: Optional[float] = None
    max_iter: int = 4000
    tol: float = 1e-7
    multilevel: bool = True

    def __post_init__(self):
        mask = np.asarray(self.inner_mask, dtype=bool)
        if mask.shape != self.domain.node_shape:
            raise ValueError("inner mask must have one entry per node")
        object.__setattr__(self, "inner_mask", mask)
        if not 1.0 < self.p <= self.domain.dim:
            raise ValueError("need 1 < p <= n")
        if self.eps is not None and not self.eps > 0:
            raise ValueError("smoothing must be positive")
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")

    @property
    def smoothing(self) -> float:
        return 1e-6 / self.domain.h if self.eps is None else self.eps

    def check(self):
        """Raise if ``K`` meets the boundary or its first node layer."""
        if not self.inner_mask.any():
            return
        grown = ndimage.binary_dilation(self.inner_mask)
        if np.any(grown & self.domain.boundary_mask):
            raise CapacityError("inner set touches the condenser boundary")


@dataclass
class CapacityResult:
    value: float
    minimizer: np.ndarray
    distribution: np.ndarray
    problem: CondenserProblem
    iterations: int = 0
    converged: bool = True
    residual_norm: float = 0.0
    negative_mass: float = 0.0
    history: list = field(default_factory=list)

    @property
    def distribution_mass(self) -> float:
        return float(np.sum(self.distribution * _copies(self.problem.domain)))

    @property
    def discretization_ok(self) -> bool:
        return self.negative_mass <= NEGATIVE_MASS_LIMIT * max(self.value, 1e-300)


def _copies(domain: GridDomain) -> np.ndarray:
    """Copies of each stored node in the unfolded grid."""
    return domain.mirror_factor * domain.node_weight


def _initial_guess(domain: GridDomain, inner: np.ndarray) -> np.ndarray:
    """Harmonic-like interpolation ``d_B / (d_K + d_B)`` from distance maps."""
    d_k = ndimage.distance_transform_edt(~inner)
    d_b = ndimage.distance_transform_edt(~domain.boundary_mask)
    u = d_b / np.maximum(d_k + d_b, 1e-300)
    u[inner] = 1.0
    u[domain.boundary_mask] = 0.0
    return u


def _solve_levels(problem: CondenserProblem) -> tuple:
    dom = problem.domain
    inner = problem.inner_mask
    coarse_dom = coarsen(dom) if problem.multilevel else None
    u0 = None
    if coarse_dom is not None:
        coarse_inner = subsample(inner)
        try:
            sub = CondenserProblem(coarse_dom, coarse_inner, problem.p, 2.0 * problem.smoothing,
                                   problem.max_iter, problem.tol * 10, True)
            sub.check()
            if coarse_inner.any():
                u_c, _, _ = _solve_levels(sub)
                u0 = np.clip(prolong(u_c), 0.0, 1.0)
        except CapacityError:
            u0 = None
    if u0 is None:
        u0 = _initial_guess(dom, inner)
    u0[inner] = 1.0
    u0[dom.boundary_mask] = 0.0
    energy = PEnergy(dom, problem.p, problem.smoothing)
    free = ~(inner | dom.boundary_mask)
    res = minimize(energy, u0, free, bounds=(0.0, 1.0), tol=problem.tol, max_iter=problem.max_iter)
    return res.u, res, energy


def capacity(problem: CondenserProblem) -> CapacityResult:
    """Minimize the regularized energy and report the unregularized one."""
    problem.check()
    dom = problem.domain
    if not problem.inner_mask.any():
        zero = np.zeros(dom.node_shape)
        return CapacityResult(0.0, zero, zero.copy(), problem)
    u, res, energy = _solve_levels(problem)
    value = PEnergy(dom, problem.p).value(u, regularized=False)
    raw = PEnergy(dom, problem.p).residual(u)
    raw[dom.boundary_mask] = 0.0
    negative = float(-np.sum(np.minimum(raw, 0.0) * _copies(dom)))
    dist = np.maximum(raw, 0.0)
    out = CapacityResult(
        value=value,
        minimizer=u,
        distribution=dist,
        problem=problem,
        iterations=res.iterations,
        converged=res.converged,
        residual_norm=res.grad_norm,
        negative_mass=negative,
        history=res.history,
    )
    if not res.converged:
        log.warning("capacity solve stopped after %d iterations (relative gradient %.2e)",
                    res.iterations, res.grad_norm)
    if not out.discretization_ok:
        log.warning("negative residual mass %.3g exceeds %.0f%% of the capacity", negative,
                    100 * NEGATIVE_MASS_LIMIT)
    return out


def capacitary_distribution(result: CapacityResult) -> RadonMeasure:
    """``-Delta_p u`` of the minimizer as a grid part on dual cells."""
    if not result.converged:
        raise ConvergenceError("capacitary distribution requested from an unconverged solve")
    return measure_from_nodal(result.problem.domain, result.distribution)


def capacity_sphere_closed_form(n: int, p: float, r: float, R: float) -> float:
    """Capacity of ``B(0, r)`` in ``B(0, R)`` from the radial p-harmonic profile."""
    if not 1.0 < p <= n:
        raise ValueError("need 1 < p <= n")
    if not 0.0 < r < R:
        raise ValueError("need 0 < r < R")
    area = sphere_area(n)
    if p == n:
        return area * math.log(R / r) ** (1.0 - n)
    k = (n - p) / (p - 1.0)
    # r^{-k} - R^{-k} via expm1, stable as p -> n
    gap = -(r ** (-k)) * math.expm1(-k * math.log(R / r))
    return area * (k / gap) ** (p - 1.0)


def annulus_normalizer(annuli: DyadicAnnuli, i: int, n: int, p: float) -> float:
    """``cap_p(dB(x0, 2^{-i}), B(x0, 2^{-i+1}))``."""
    return capacity_sphere_closed_form(n, p, 2.0 ** (-i), 2.0 ** (-i + 1))


def ball_domain(radius: float, cells: int, dim: int, octant: bool = True, box: Optional[float] = None) -> GridDomain:
    """Grid of ``B(0, radius)``: nodes outside the ball are Dirichlet holes."""
    box = radius if box is None else box
    dom = GridDomain.cube(box, cells, dim, octant=octant)
    return dom.with_holes(dom.radius() > radius * (1.0 + 1e-12))


def shell_domain(inner: float, outer: float, cells: int, dim: int, octant: bool = True) -> GridDomain:
    """Grid of the closed shell ``inner <= |x| <= outer`` with holes elsewhere."""
    dom = GridDomain.cube(outer, cells, dim, octant=octant)
    r = dom.radius()
    return dom.with_holes((r > outer * (1.0 + 1e-12)) | (r < inner * (1.0 - 1e-12)))


def spherical_condenser(n: int = 3, p: float = 2.0, r: float = 1.0, R: float = 2.0, cells: int = 64,
                        octant: bool = True, **kwargs) -> CondenserProblem:
    """``B(0, r)`` inside ``B(0, R)``, by default on the positive orthant with mirror planes."""
    dom = ball_domain(R, cells, n, octant=octant)
    inner = dom.radius() <= r * (1.0 + 1e-12)
    return CondenserProblem(dom, inner, p, **kwargs)


def level_set_capacities(result: CapacityResult, levels: Sequence[float] = (0.25, 0.5, 0.75)) -> dict:
    """``lambda^{p-1} cap_p({u > lambda}, Omega)`` for each level ``lambda``."""
    prob = result.problem
    out = {}
    for lam in levels:
        if not 0.0 < lam < 1.0:
            raise ValueError("levels must lie in (0, 1)")
        mask = result.minimizer > lam
        sub = CondenserProblem(prob.domain, mask, prob.p, prob.eps, prob.max_iter, prob.tol)
        out[lam] = lam ** (prob.p - 1.0) * capacity(sub).value
    return out


def unit_annulus_domain(cells: int, dim: int, octant: bool = False) -> GridDomain:
    """Reference grid of ``Omega_0 = {1/4 <= |xi| <= 2}`` (closed shell)."""
    return shell_domain(0.25, 2.0, cells, dim, octant=octant)


def dyadic_capacities(
    masks: Mapping[int, np.ndarray],
    annuli: DyadicAnnuli,
    p: float,
    reference: GridDomain,
    **kwargs,
) -> dict:
    """``cap_p(E cap omega_i, Omega_i)`` for each annulus index.

    ``masks[i]`` is a node mask on ``reference``, a grid of the unit-scale
    annulus ``Omega_0`` in the coordinates ``xi = 2^i (x - x0)``.  Each solve is
    done at unit scale and mapped back with the scaling law
    ``cap(2^{-i} A, 2^{-i} B) = 2^{-i(n-p)} cap(A, B)``.
    """
    n = reference.dim
    items = sorted(masks.items())

    def solve(item):
        i, mask = item
        annuli._check(i)
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            return i, 0.0
        res = capacity(CondenserProblem(reference, mask, p, **kwargs))
        return i, res.value * 2.0 ** (-i * (n - p))

    return dict(parallel_map(solve, items))
