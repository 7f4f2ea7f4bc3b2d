"""Numerical laboratory for nonlinear potential theory.

Wolff potentials, variational p-capacities, thinness sums, p-Laplace
solutions with measure data and singular asymptotics of p-superharmonic
functions, computed at desk scale.
"""

from nlpotlab.measures import (
    Atom,
    DyadicAnnuli,
    GridDomain,
    GridPart,
    RadialPart,
    RadonMeasure,
    annulus_mass,
    ball_mass,
    rescale_measure,
    sphere_area,
)

__all__ = [
    "Atom",
    "DyadicAnnuli",
    "GridDomain",
    "GridPart",
    "RadialPart",
    "RadonMeasure",
    "annulus_mass",
    "ball_mass",
    "rescale_measure",
    "sphere_area",
]

__version__ = "0.1.0"
