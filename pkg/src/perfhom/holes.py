"""Hole families: closed balls with their enclosing-ball and separation data.

A hole of radius 0 encodes the empty set and is kept in the list so the
cell-to-hole indexing stays total.  For balls the enclosing-ball bound
``a <= diam K <= 2a`` holds with equality ``diam = 2a``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidParameterError
from .tiling import Cell


@dataclass(frozen=True)
class Hole:
    """A closed ball ``B(center, radius)``; ``radius == 0`` means empty.

    ``template_shape``/``template_scale``/``reference_capacity`` tag holes
    produced from a congruent template; ``radius`` is then the scaled
    enclosing-ball radius.  Only plain balls are solvable downstream.
    """

    center: tuple[float, ...]
    radius: float
    cell_index: tuple[int, ...]
    template_shape: Optional[str] = None
    template_scale: Optional[float] = None
    reference_capacity: Optional[float] = None

    def __post_init__(self):
        if self.radius < 0.0:
            raise InvalidParameterError(f"hole radius must be >= 0, got {self.radius}")

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def is_empty(self) -> bool:
        return self.radius == 0.0

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    @property
    def is_ball(self) -> bool:
        return self.template_shape in (None, "ball")


@dataclass(frozen=True)
class SeparationParams:
    """Separation radii ``R = c1 * eps`` shared by all holes of one family.

    ``margin(a) = R - a`` is the cutoff annulus width; it must stay
    positive for the corrector to be defined.
    """

    c1: float
    epsilon: float

    def __post_init__(self):
        if not (self.c1 > 0.0 and self.epsilon > 0.0):
            raise InvalidParameterError("separation needs c1 > 0 and epsilon > 0")

    @property
    def R(self) -> float:
        return self.c1 * self.epsilon

    def margin(self, radius: float) -> float:
        return self.R - radius


@dataclass(frozen=True)
class DisjointnessReport:
    """Result of the separation-ball geometry check."""

    disjoint: bool
    inclusion_ok: bool
    overlapping_pairs: tuple[tuple[int, int], ...] = ()
    inclusion_violations: tuple[tuple[int, ...], ...] = ()

    @property
    def ok(self) -> bool:
        return self.disjoint and self.inclusion_ok


def disjointness_check(
    holes: Sequence[Hole], seps: SeparationParams, block: int = 512
) -> DisjointnessReport:
    """Check that separation balls are pairwise disjoint and sit in their cells.

    Open balls touching at a point count as disjoint.  The inclusion part
    checks ``B(center, c1*eps)`` against the owning cell's half-open box;
    pair indices refer to positions in ``holes``.
    """
    n = len(holes)
    R = seps.R
    violations = []
    for h in holes:
        cell = Cell(h.cell_index, seps.epsilon)
        inside = all(
            c - R >= l and c + R <= u
            for c, l, u in zip(h.center, cell.lower, cell.upper)
        )
        if not inside:
            violations.append(h.cell_index)
    pairs: list[tuple[int, int]] = []
    if n > 1:
        centers = np.array([h.center for h in holes], dtype=float)
        limit = (2.0 * R) ** 2
        for start in range(0, n, block):
            stop = min(start + block, n)
            chunk = centers[start:stop]
            diff = chunk[:, None, :] - centers[None, :, :]
            dist2 = np.einsum("ijk,ijk->ij", diff, diff)
            rows, cols = np.nonzero(dist2 < limit)
            for r, c in zip(rows, cols):
                i = start + int(r)
                j = int(c)
                if i < j:
                    pairs.append((i, j))
    return DisjointnessReport(
        disjoint=not pairs,
        inclusion_ok=not violations,
        overlapping_pairs=tuple(pairs),
        inclusion_violations=tuple(violations),
    )


def write_holes_csv(holes: Sequence[Hole], path) -> None:
    """Serialise holes as CSV with 17-significant-digit decimals."""
    if not holes:
        raise InvalidParameterError("refusing to write an empty hole list")
    dim = holes[0].dim
    header = [f"i{k + 1}" for k in range(dim)]
    header += [f"cx{k + 1}" for k in range(dim)]
    header.append("radius")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for h in holes:
            row = [str(i) for i in h.cell_index]
            row += [format(c, ".17g") for c in h.center]
            row.append(format(h.radius, ".17g"))
            writer.writerow(row)


def read_holes_csv(path) -> list[Hole]:
    """Read a hole list written by :func:`write_holes_csv`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        dim = (len(header) - 1) // 2
        holes = []
        for row in reader:
            index = tuple(int(v) for v in row[:dim])
            center = tuple(float(v) for v in row[dim : 2 * dim])
            radius = float(row[2 * dim])
            holes.append(Hole(center, radius, index))
    return holes
