"""Thinness of sets at a point, for continuity (Wiener) and for singular behaviour.

Every piece ``E cap omega_i`` is handled at unit scale through
``xi = 2^i (x - x0)``, where it becomes a subset of
``omega_0 = {1/2 <= |xi| <= 1}`` inside ``Omega_0 = {1/4 <= |xi| <= 2}``.  The
scaling law ``cap_p(2^{-i} A, 2^{-i} B) = 2^{-i(n-p)} cap_p(A, B)`` then turns
all annuli into the same kind of reference computation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence

import numpy as np
from scipy import ndimage

from nlpotlab.capacity import (
    CapacityError,
    CondenserProblem,
    capacity,
    capacity_sphere_closed_form,
    shell_domain,
)
from nlpotlab.measures import Atom, GridDomain, GridPart, RadonMeasure, measure_from_nodal
from nlpotlab.parallel import parallel_map
from nlpotlab.wolff import choose_weight_sequence

log = logging.getLogger(__name__)

BALL_CENTER = 0.75
SCALE_FREE_RADIUS = 0.1
MAX_BALL_RADIUS = 0.25
THIN_MARGIN = 0.1
TINY_TERM = 1e-12
FLOOR_TERM = 1e-6

KINDS = ("empty", "ball_chain", "ray_segment", "full_annuli", "masks")


@dataclass(frozen=True, eq=False)
class SetFamily:
    """Parametric sets ``E`` near ``x0 = 0``, described annulus by annulus.

    * ``ball_chain``: balls ``B((3/4) 2^{-i} e_1, 2^{-i} lambda_i)``, with
      ``lambda_i = lam(i)`` clipped to 1/4 so that each ball lies in ``omega_i``.
    * ``ray_segment``: the segment ``{t e_1 : 0 < t <= 1}``, realized as a line
      of grid nodes.  For ``p <= n - 1`` a segment is p-polar, so its pieces
      have zero capacity and no grid solve is made.
    * ``full_annuli``: ``E cap omega_i = omega_i``.
    * ``masks``: explicit node masks on ``reference``, a grid of ``Omega_0`` in
      unit-scale coordinates.
    """

    kind: str
    n: int = 3
    lam: Optional[Callable[[int], float]] = None
    masks: Optional[Dict[int, np.ndarray]] = None
    reference: Optional[GridDomain] = None
    label: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown family kind {self.kind!r}")
        if self.kind == "ball_chain" and self.lam is None:
            raise ValueError("ball_chain needs a radius sequence")
        if self.kind == "masks":
            if self.masks is None or self.reference is None:
                raise ValueError("mask families need masks and a reference grid")
            r = self.reference.radius()
            for i, mask in self.masks.items():
                mask = np.asarray(mask, dtype=bool)
                if mask.shape != self.reference.node_shape:
                    raise ValueError(f"mask {i} has the wrong shape")
                if np.any(mask & ((r < 0.5 - 1e-12) | (r > 1.0 + 1e-12))):
                    raise ValueError(f"mask {i} leaves omega_i")

    @classmethod
    def ball_chain(cls, n: int, lam: Callable[[int], float], label: str = "") -> "SetFamily":
        return cls("ball_chain", n, lam=lam, label=label or "ball_chain")

    @classmethod
    def power_chain(cls, n: int, exponent: float) -> "SetFamily":
        """Ball chain with ``lambda_i = i^{-exponent}``."""
        return cls("ball_chain", n, lam=lambda i: float(i) ** (-exponent), label=f"ball_chain(i^-{exponent:g})")

    def radius(self, i: int) -> float:
        """Unit-scale radius of the ``i``-th ball (ball chains only)."""
        if i < 1:
            raise ValueError("ball chains start at i = 1")
        return min(float(self.lam(i)), MAX_BALL_RADIUS)

    def piece_key(self, i: int):
        """Hashable description of the unit-scale piece of annulus ``i``."""
        if self.kind == "empty":
            return None
        if self.kind == "ball_chain":
            rho = self.radius(i)
            return ("ball", rho) if rho > 0 else None
        if self.kind == "masks":
            mask = self.masks.get(i)
            return None if mask is None or not np.any(mask) else ("mask", i)
        return (self.kind,)

    @property
    def extendable(self) -> bool:
        """Whether pieces beyond the requested range are available for tail sums."""
        return self.kind != "masks"


@dataclass
class ThinnessReport:
    indices: np.ndarray
    terms: np.ndarray
    partial_sums: np.ndarray
    beta: float
    verdict: str
    criterion: str
    unit_caps: np.ndarray = field(default_factory=lambda: np.empty(0))
    missing: list = field(default_factory=list)

    def rows(self):
        for i, t, s in zip(self.indices, self.terms, self.partial_sums):
            yield int(i), float(t), float(s)


# ---------------------------------------------------------------------------
# Unit-scale capacities
# ---------------------------------------------------------------------------


def _ball_grid(rho: float, n: int, cells: int, in_annulus: bool) -> tuple:
    """Box fitted to ``B((3/4) e_1, rho)`` and the ball's node mask.

    When the box ``c +- 5 rho`` stays inside ``Omega_0`` (or no annulus is
    imposed) the problem is symmetric about the ball centre on every axis and
    the positive orthant about the centre is stored.  Otherwise the box
    ``[c - L, c + L] x [0, L]^{n-1}`` is used with the nodes outside
    ``Omega_0`` turned into holes.
    """
    half = min(5.0 * rho, 2.75)
    c = np.zeros(n)
    c[0] = BALL_CENTER
    inside_shell = BALL_CENTER - half >= 0.25 and math.hypot(BALL_CENTER + half, half * math.sqrt(n - 1)) <= 2.0
    if not in_annulus or inside_shell:
        dom = GridDomain.from_box(c, c + half, cells, (True,) * n)
    else:
        lower = np.zeros(n)
        lower[0] = BALL_CENTER - half
        upper = np.full(n, half)
        upper[0] = BALL_CENTER + half
        cells_v = [2 * cells] + [cells] * (n - 1)
        dom = GridDomain.from_box(lower, upper, cells_v, (False,) + (True,) * (n - 1))
        r = dom.radius()
        dom = dom.with_holes((r < 0.25 - 1e-12) | (r > 2.0 + 1e-12))
    mask = dom.radius(c) <= rho * (1.0 + 1e-12)
    return dom, mask


def _annulus_grid(kind: str, n: int, cells: int) -> tuple:
    if kind == "full_annuli":
        dom = shell_domain(0.25, 2.0, cells, n, octant=True)
        r = dom.radius()
        return dom, (r >= 0.5 - 1e-12) & (r <= 1.0 + 1e-12)
    if kind == "ray_segment":
        lower = np.zeros(n)
        lower[0] = -2.0
        dom = GridDomain.from_box(lower, np.full(n, 2.0), [2 * cells] + [cells] * (n - 1),
                                  (False,) + (True,) * (n - 1))
        r = dom.radius()
        dom = dom.with_holes((r < 0.25 - 1e-12) | (r > 2.0 + 1e-12))
        coords = dom.node_coords()
        on_axis = np.all([np.abs(x) < 1e-12 for x in coords[1:]], axis=0)
        return dom, on_axis & (coords[0] >= 0.5 - 1e-12) & (coords[0] <= 1.0 + 1e-12)
    raise ValueError(kind)


class UnitCapacities:
    """Cache of unit-scale capacities ``cap_p(piece, Omega_0)``.

    Small balls (``rho <= 0.1``) never meet the holes of ``Omega_0`` in their
    fitted box, so their capacity follows ``rho^{n-p}`` from one reference
    solve.
    """

    def __init__(self, n: int, p: float, ball_cells: int = 40, annulus_cells: int = 64, **solver):
        self.n = n
        self.p = p
        self.ball_cells = ball_cells
        self.annulus_cells = annulus_cells
        self.solver = solver
        self._cache = {}

    def _solve(self, dom, mask) -> float:
        return capacity(CondenserProblem(dom, mask, self.p, **self.solver)).value

    def ball(self, rho: float) -> float:
        if rho <= SCALE_FREE_RADIUS:
            ref = self.ball(SCALE_FREE_RADIUS) if rho != SCALE_FREE_RADIUS else None
            if ref is not None:
                return ref * (rho / SCALE_FREE_RADIUS) ** (self.n - self.p)
        key = ("ball", rho)
        if key not in self._cache:
            self._cache[key] = self._solve(*_ball_grid(rho, self.n, self.ball_cells, True))
        return self._cache[key]

    def piece(self, family: SetFamily, i: int) -> float:
        key = family.piece_key(i)
        if key is None:
            return 0.0
        if key[0] == "ball":
            return self.ball(key[1])
        if key[0] == "mask":
            ck = ("mask", id(family), i)
            if ck not in self._cache:
                self._cache[ck] = self._solve(family.reference, family.masks[i])
            return self._cache[ck]
        if key[0] == "ray_segment" and self.p <= self.n - 1:
            # segments carry no p-capacity for p <= n - 1; the grid value only decays like 1/log(1/h)
            return 0.0
        if key not in self._cache:
            self._cache[key] = self._solve(*_annulus_grid(key[0], self.n, self.annulus_cells))
        return self._cache[key]


def unit_piece_capacities(family: SetFamily, p: float, indices: Sequence[int],
                          cache: Optional[UnitCapacities] = None) -> tuple:
    """Unit-scale capacities per index; failed solves come back as NaN."""
    cache = UnitCapacities(family.n, p) if cache is None else cache
    # solve distinct pieces concurrently, then read everything from the cache
    distinct = {}
    for i in indices:
        key = family.piece_key(i)
        if key is not None and key not in distinct:
            distinct[key] = i

    def warm(i):
        try:
            cache.piece(family, i)
            return None
        except (CapacityError, ValueError) as exc:
            return (i, str(exc))

    failures = [f for f in parallel_map(warm, list(distinct.values())) if f]
    failed_keys = {family.piece_key(i) for i, _ in failures}
    caps = []
    missing = []
    for i in indices:
        if family.piece_key(i) in failed_keys:
            caps.append(math.nan)
            missing.append(i)
        else:
            caps.append(cache.piece(family, i))
    for i, msg in failures:
        log.warning("capacity of piece %d failed: %s", i, msg)
    return np.asarray(caps, dtype=float), missing


# ---------------------------------------------------------------------------
# Criteria
# ---------------------------------------------------------------------------


def classify(indices, terms, missing=()) -> tuple:
    """``(beta, verdict)`` from a power-law fit over the deepest half of the terms."""
    indices = np.asarray(indices, dtype=float)
    terms = np.asarray(terms, dtype=float)
    if missing or np.any(~np.isfinite(terms)):
        return math.nan, "inconclusive"
    half = max(2, len(terms) // 2)
    tail_i, tail_t = indices[-half:], terms[-half:]
    if np.all(tail_t < TINY_TERM) or np.all(terms[-2:] < TINY_TERM):
        # eventually vanishing: finitely many nonzero terms
        return math.inf, "thin"
    positive = tail_t > 0
    beta = math.nan
    if np.count_nonzero(positive) >= 2:
        slope = np.polyfit(np.log(tail_i[positive]), np.log(tail_t[positive]), 1)[0]
        beta = -float(slope)
    if np.count_nonzero(positive) == len(tail_t) and beta > 1.0 + THIN_MARGIN:
        return beta, "thin"
    if np.all(tail_t >= FLOOR_TERM):
        return beta, "not_thin"
    return beta, "inconclusive"


def _report(indices, terms, criterion, caps, missing) -> ThinnessReport:
    terms = np.asarray(terms, dtype=float)
    beta, verdict = classify(indices, terms, missing)
    partial = np.cumsum(np.where(np.isfinite(terms), terms, 0.0))
    return ThinnessReport(np.asarray(indices), terms, partial, beta, verdict, criterion, caps, list(missing))


def _index_range(i_range) -> list:
    lo, hi = i_range
    if lo < 1 or hi < lo + 3:
        raise ValueError("need 1 <= i_min and at least four annuli")
    return list(range(lo, hi + 1))


def singular_thin_sum(family: SetFamily, p: float, i_range=(1, 12),
                      cache: Optional[UnitCapacities] = None) -> ThinnessReport:
    """Terms ``cap_p(E cap omega_i, Omega_i) / cap_p(dB(2^{-i}), B(2^{-i+1}))``.

    For p = n the terms are ``i^{n-1} cap_n(E cap omega_i, Omega_i)``.  Both
    capacities scale alike, so the terms equal their unit-scale versions.
    """
    n = family.n
    if not 1.0 < p <= n:
        raise ValueError("need 1 < p <= n")
    idx = _index_range(i_range)
    caps, missing = unit_piece_capacities(family, p, idx, cache)
    if p == n:
        terms = caps * np.asarray(idx, dtype=float) ** (n - 1)
        crit = "singular_n"
    else:
        terms = caps / capacity_sphere_closed_form(n, p, 1.0, 2.0)
        crit = "singular_p"
    return _report(idx, terms, crit, caps, missing)


def wiener_sum(family: SetFamily, p: float, i_range=(1, 12), tail_extra: int = 12,
               cache: Optional[UnitCapacities] = None) -> ThinnessReport:
    """Terms ``(cap_p(E cap B(2^{-i}), B(2^{-i+1})) / cap_p(B(2^{-i}), B(2^{-i+1})))^{1/(p-1)}``.

    The numerator is bounded by sub-additivity and domain monotonicity,
    ``cap_p(E cap B_i, B_{i-1}) <= sum_{j >= i} cap_p(E cap omega_j, Omega_j)``,
    and that upper bound is what is summed.  For families defined at every
    depth the sum runs ``tail_extra`` annuli past the requested range.
    """
    n = family.n
    if not 1.0 < p <= n:
        raise ValueError("need 1 < p <= n")
    idx = _index_range(i_range)
    last = idx[-1] + (tail_extra if family.extendable else 0)
    all_idx = list(range(idx[0], last + 1))
    caps, missing = unit_piece_capacities(family, p, all_idx, cache)
    j = np.asarray(all_idx, dtype=float)
    if p == n:
        phys = caps
    else:
        phys = caps * 2.0 ** (-j * (n - p))
    tails = np.cumsum(np.where(np.isfinite(phys), phys, 0.0)[::-1])[::-1]
    terms = []
    for k, i in enumerate(idx):
        norm = capacity_sphere_closed_form(n, p, 2.0 ** (-i), 2.0 ** (-i + 1))
        terms.append((tails[k] / norm) ** (1.0 / (p - 1.0)))
    missing = [i for i in missing if i in idx] or ([idx[-1]] if missing else [])
    return _report(idx, terms, "wiener_continuity", caps[: len(idx)], missing)


@dataclass
class CriteriaPair:
    wiener: ThinnessReport
    singular: ThinnessReport

    @property
    def verdicts(self) -> tuple:
        return self.wiener.verdict, self.singular.verdict

    @property
    def implication_holds(self) -> bool:
        """Continuity-thin must imply singular-thin."""
        return self.wiener.verdict != "thin" or self.singular.verdict == "thin"


def compare_criteria(family: SetFamily, p: float, i_range=(1, 12),
                     cache: Optional[UnitCapacities] = None) -> CriteriaPair:
    """Both reports for ``2 <= p < n``; raises if continuity-thin fails to imply singular-thin."""
    if not 2.0 <= p < family.n:
        raise ValueError("the comparison needs 2 <= p < n")
    cache = UnitCapacities(family.n, p) if cache is None else cache
    pair = CriteriaPair(wiener_sum(family, p, i_range, cache=cache),
                        singular_thin_sum(family, p, i_range, cache=cache))
    if not pair.implication_holds:
        raise AssertionError(f"continuity-thin without singular-thin on {family.label or family.kind}")
    return pair


# ---------------------------------------------------------------------------
# Blow-up measure
# ---------------------------------------------------------------------------


@dataclass
class BlowupResult:
    measure: RadonMeasure
    weights: np.ndarray
    indices: np.ndarray
    unit_caps: np.ndarray
    piece_masses: np.ndarray

    @property
    def total_mass(self) -> float:
        return self.measure.total_mass


def _scaled_grid_measure(mu: RadonMeasure, s: float, mass_factor: float) -> RadonMeasure:
    parts = []
    for g in mu.grid_parts:
        dom = g.domain
        parts.append(GridPart(GridDomain(dom.lower * s, dom.cells, dom.h * s), g.cell_masses * mass_factor))
    return RadonMeasure(mu.dim, grid_parts=tuple(parts))


def blowup_measure(family: SetFamily, p: float, m: float, i_range=(1, 12), ball_cells: int = 40,
                   annulus_cells: int = 64, check_thin: bool = True, tail_extra: int = 12) -> BlowupResult:
    """``mu = m delta_0 + sum_i 2^{i(n-p)} kappa_i hat mu_i`` (``i^{n-1} tau_i`` for p = n).

    ``hat mu_i`` is the capacitary distribution of ``hat E_i``, the one-cell
    dilation of ``E cap omega_i``, in ``B(0, 2^{-i+3})``; the weights come from
    :func:`nlpotlab.wolff.choose_weight_sequence` on the unit-scale
    capacities, so ``kappa_i -> inf`` while the weighted sum stays finite.
    For families defined at every depth the weights also see the capacities
    of ``tail_extra`` further annuli, so the truncated chain does not end
    with inflated weights.
    """
    n = family.n
    if m < 0:
        raise ValueError("m must be nonnegative")
    if check_thin:
        report = singular_thin_sum(family, p, i_range, UnitCapacities(n, p, ball_cells, annulus_cells))
        if report.verdict != "thin":
            raise ValueError(f"family is not thin for the singular behaviour (verdict {report.verdict})")
    idx = _index_range(i_range)
    extra = list(range(idx[-1] + 1, idx[-1] + 1 + (tail_extra if family.extendable else 0)))
    pieces = _DilatedPieces(n, p, ball_cells, annulus_cells)
    keys = sorted({family.piece_key(i) for i in idx + extra} - {None}, key=repr)
    parallel_map(pieces.get, [k for k in keys if not pieces.scaled(k)])
    parallel_map(pieces.get, [k for k in keys if pieces.scaled(k)])

    def unit_of(i):
        key = family.piece_key(i)
        return 0.0 if key is None else pieces.get(key)[0]

    def weighted(i, c):
        return c * float(i) ** (n - 1) if p == n else c

    unit = np.array([unit_of(i) for i in idx])
    tail = float(sum(weighted(i, unit_of(i)) for i in extra))
    weights = choose_weight_sequence([weighted(i, c) for i, c in zip(idx, unit)],
                                     mode="n" if p == n else "p", tail=tail)
    mu = RadonMeasure(n, (Atom(np.zeros(n), m),))
    masses = []
    for i, w, c in zip(idx, weights, unit):
        key = family.piece_key(i)
        if key is None or c == 0.0:
            masses.append(0.0)
            continue
        s = 2.0 ** (-i)
        # physical distribution mass = 2^{-i(n-p)} c; the prefactor undoes the scale
        factor = w * (float(i) ** (n - 1) if p == n else 1.0)
        mu = mu + _scaled_grid_measure(pieces.get(key)[1], s, factor)
        masses.append(factor * c)
    return BlowupResult(mu, np.asarray(weights), np.asarray(idx), unit, np.asarray(masses))


class _DilatedPieces:
    """Capacities and distributions of dilated unit-scale pieces.

    Balls with ``rho <= SCALE_FREE_RADIUS`` sit in similar fitted boxes, so
    one reference solve is rescaled about the ball centre.
    """

    def __init__(self, n: int, p: float, ball_cells: int, annulus_cells: int):
        self.n, self.p = n, p
        self.ball_cells, self.annulus_cells = ball_cells, annulus_cells
        self._cache = {}

    @staticmethod
    def scaled(key) -> bool:
        return key[0] == "ball" and key[1] < SCALE_FREE_RADIUS

    def get(self, key) -> tuple:
        if key in self._cache:
            return self._cache[key]
        if self.scaled(key):
            value, dist = self.get(("ball", SCALE_FREE_RADIUS))
            s = key[1] / SCALE_FREE_RADIUS
            c = np.zeros(self.n)
            c[0] = BALL_CENTER
            parts = tuple(GridPart(GridDomain(c + (g.domain.lower - c) * s, g.domain.cells, g.domain.h * s,
                                              g.domain.mirror), g.cell_masses * s ** (self.n - self.p))
                          for g in dist.grid_parts)
            out = (value * s ** (self.n - self.p), RadonMeasure(self.n, grid_parts=parts))
        else:
            dom, mask = _dilated_piece(key, self.n, self.ball_cells)
            res = capacity(CondenserProblem(dom, mask, self.p))
            out = (res.value, measure_from_nodal(dom, res.distribution))
        self._cache[key] = out
        return out


def _dilated_piece(key, n: int, ball_cells: int) -> tuple:
    """Grid and node mask of ``hat E`` at unit scale.

    Ball pieces use their fitted box, which lies well inside ``B(0, 8)``; its
    faces act as the outer plate of the condenser, a consistent upper bound
    for ``cap_p(hat E, B(0, 8))`` as with the annulus terms.
    """
    if key[0] != "ball":
        raise ValueError("the blow-up construction supports ball chains")
    dom, mask = _ball_grid(key[1], n, ball_cells, in_annulus=False)
    grown = ndimage.binary_dilation(mask, structure=np.ones((3,) * n, dtype=bool))
    grown &= ~dom.boundary_mask
    return dom, grown
