import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nlpotlab.gridenergy import PEnergy, coarsen, minimize, prolong
from nlpotlab.measures import GridDomain


def _domain(octant):
    return GridDomain.cube(1.0, 6, 2, octant=octant)


@pytest.mark.parametrize("octant", [False, True])
@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_gradient_matches_finite_differences(p, octant):
    dom = _domain(octant)
    rng = np.random.default_rng(1)
    u = rng.uniform(0, 1, dom.node_shape)
    en = PEnergy(dom, p, eps=1e-2)
    _, g, _ = en.gradient(u)
    for idx in [(1, 2), (3, 3), (0, 4)]:
        e = np.zeros_like(u)
        e[idx] = 1e-6
        fd = (en.value(u + e) - en.value(u - e)) / 2e-6
        assert g[idx] == pytest.approx(fd, rel=1e-5, abs=1e-9)


def test_linear_field_energy_p2():
    dom = GridDomain.from_box([0, 0, 0], [1, 1, 1], 4)
    u = dom.node_coords()[0]
    assert PEnergy(dom, 2.0).value(u, regularized=False) == pytest.approx(1.0, rel=1e-12)


@given(st.floats(1.2, 4.0), st.floats(0.1, 5.0))
def test_energy_homogeneity(p, t):
    dom = _domain(False)
    u = np.random.default_rng(0).uniform(0, 1, dom.node_shape)
    en = PEnergy(dom, p)
    assert en.value(t * u, regularized=False) == pytest.approx(t**p * en.value(u, regularized=False), rel=1e-10)


def test_minimize_decreases_energy_monotonically():
    dom = GridDomain.cube(1.0, 16, 2)
    free = ~dom.boundary_mask
    en = PEnergy(dom, 3.0, eps=1e-3)
    source = np.where(free, dom.h**2, 0.0)
    res = minimize(en, np.zeros(dom.node_shape), free, source=source, tol=1e-8)
    assert res.converged
    assert np.all(np.diff(res.history) <= 1e-12)


def test_prolong_and_coarsen_shapes():
    dom = GridDomain.cube(1.0, 16, 3, octant=True)
    c = coarsen(dom)
    assert c.cells == (8, 8, 8) and c.h == pytest.approx(2 * dom.h)
    assert prolong(np.zeros(c.node_shape)).shape == dom.node_shape
    assert coarsen(GridDomain.cube(1.0, 6, 2)) is None
