"""Capacity-matched hole construction for a given target potential.

Each lattice cell meeting the domain receives one closed ball, centered
at the cell center, whose Newtonian capacity equals the cell mass of the
potential:

    radius = (mu(A_i) / ((d - 2) S_d)) ** (1 / (d - 2)).

Zero-mass cells keep an empty hole so cell and hole lists stay aligned.
The separation constant is fixed to ``c1 = 1`` (the largest ball inside
a cell), so the construction degenerates exactly when the strict
separation inequality ``a < R`` would fail.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .capacity import sphere_area
from .errors import ConstructionError, InvalidParameterError
from .holes import Hole, SeparationParams, write_holes_csv
from .potential import DEFAULT_QUADRATURE, Potential, QuadratureSpec, cell_mass
from .tiling import Box, TilingSpec, cells_intersecting

C1 = 1.0


@dataclass(frozen=True)
class ConstructionReport:
    """Holes realizing a potential, with the separation data used."""

    holes: tuple[Hole, ...]
    dim: int
    epsilon: float
    c1: float
    max_radius_ratio: float
    skipped: tuple[tuple[int, ...], ...]
    total_mass: float

    @property
    def separation(self) -> SeparationParams:
        return SeparationParams(c1=self.c1, epsilon=self.epsilon)

    @property
    def nonempty(self) -> tuple[Hole, ...]:
        return tuple(h for h in self.holes if not h.is_empty)

    def header(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "c1": self.c1,
            "max_radius_ratio": self.max_radius_ratio,
            "total_mass": self.total_mass,
        }

    def write(self, csv_path, header_path=None) -> None:
        """Serialise to the hole CSV plus a JSON header."""
        write_holes_csv(self.holes, csv_path)
        if header_path is not None:
            with open(header_path, "w") as fh:
                json.dump(self.header(), fh, indent=2)
                fh.write("\n")


def _construct(
    mu: Potential,
    spec: TilingSpec,
    domain: Box,
    quad: QuadratureSpec,
    strict: bool,
    radius_of_mass,
    tag,
) -> ConstructionReport:
    cells = cells_intersecting(spec, domain)
    eps = spec.epsilon
    holes = []
    skipped = []
    total = 0.0
    max_ratio = 0.0
    for cell in cells:
        mass = cell_mass(mu, cell, quad)
        total += mass
        if mass == 0.0:
            skipped.append(cell.index)
            holes.append(Hole(cell.center, 0.0, cell.index, *tag(0.0)))
            continue
        radius, scale = radius_of_mass(mass)
        ratio = radius / (C1 * eps)
        max_ratio = max(max_ratio, ratio)
        if strict and radius >= eps:
            raise ConstructionError(
                f"hole radius {radius:.6g} >= cell half-width {eps:.6g} "
                f"in cell {cell.index}; lower epsilon or the potential"
            )
        holes.append(Hole(cell.center, radius, cell.index, *tag(scale)))
    return ConstructionReport(
        holes=tuple(holes),
        dim=spec.dim,
        epsilon=eps,
        c1=C1,
        max_radius_ratio=max_ratio,
        skipped=tuple(skipped),
        total_mass=total,
    )


def construct_holes(
    mu: Potential,
    spec: TilingSpec,
    domain: Box,
    quad: QuadratureSpec = DEFAULT_QUADRATURE,
    *,
    strict: bool = True,
) -> ConstructionReport:
    """Build one capacity-matched ball per cell meeting ``domain``.

    With ``strict`` (the default) a radius reaching the cell half-width
    raises :class:`ConstructionError`; passing ``strict=False`` keeps the
    oversized balls and reports ``max_radius_ratio >= 1`` instead, which
    leaves the separation assumptions violated but still solvable.
    """
    d = spec.dim
    denom = (d - 2) * sphere_area(d)
    exponent = 1.0 / (d - 2)

    def radius_of_mass(mass):
        return (mass / denom) ** exponent, None

    return _construct(mu, spec, domain, quad, strict, radius_of_mass, lambda s: ())


def construct_holes_template(
    mu: Potential,
    spec: TilingSpec,
    domain: Box,
    template_capacity: float,
    shape_id: str = "template",
    quad: QuadratureSpec = DEFAULT_QUADRATURE,
    *,
    strict: bool = True,
) -> ConstructionReport:
    """Scale a congruent template ``K`` so that ``cap(K_i) = mu(A_i)``.

    The template is normalised to a unit enclosing ball, so the stored
    radius is the scale factor ``(mu(A_i) / cap(K)) ** (1/(d-2))``
    itself.  Downstream solvers accept only ball templates.
    """
    if not (template_capacity > 0.0):
        raise InvalidParameterError("template capacity must be positive")
    exponent = 1.0 / (spec.dim - 2)

    def radius_of_mass(mass):
        scale = (mass / template_capacity) ** exponent
        return scale, scale

    def tag(scale):
        return (shape_id, scale, template_capacity)

    return _construct(mu, spec, domain, quad, strict, radius_of_mass, tag)
