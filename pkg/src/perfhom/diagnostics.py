"""Numerical checks of the separation assumptions and the capacity-density
convergence.

The assumption quantities are direct finite sums and sups over the cells
meeting the domain.  The negative-norm machinery realises the discrete
``H^-1`` norm through the same grid Laplacian the solvers use, so both
sides of every comparison carry the same discretisation bias:

    ||nu||_{H^-1} = sqrt(<nu, phi> h^d)   with   -Delta_h phi = nu.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .capacity import capacity_ball
from .cg import pcg
from .errors import InvalidParameterError
from .holes import Hole, SeparationParams
from .potential import DEFAULT_QUADRATURE, Potential, QuadratureSpec
from .solver import (
    Grid,
    _multilinear_sample,
    field_from_callable,
    lump_measure,
    thread_pool,
)
from .stencil import neg_laplacian
from .tiling import Cell, TilingSpec, cell_axis_indices

Array = np.ndarray


@dataclass(frozen=True)
class AssumptionReport:
    """Snapshot of the separation-assumption quantities at one epsilon.

    Sums and sups run over the cells meeting the domain; empty holes
    contribute zero to the sums.
    """

    epsilon: float
    n_cells: int
    n_holes: int
    max_R: float
    sup_a_over_R: float
    sum_A2: float
    sup_A3: float
    sum_A4: float
    sum_A6: float
    diam_over_R: float

    _COLUMNS = (
        "epsilon",
        "n_cells",
        "n_holes",
        "max_R",
        "sup_a_over_R",
        "sum_A2",
        "sup_A3",
        "sum_A4",
        "sum_A6",
        "diam_over_R",
    )

    def as_row(self) -> dict:
        return {name: getattr(self, name) for name in self._COLUMNS}


def assumption_quantities(
    holes: Sequence[Hole], seps: SeparationParams, cells: Sequence[Cell]
) -> AssumptionReport:
    """Evaluate the separation-assumption quantities by direct summation.

    ``holes`` and ``cells`` must be aligned index by index.
    """
    if len(holes) != len(cells):
        raise InvalidParameterError(
            f"holes and cells are misaligned: {len(holes)} vs {len(cells)}"
        )
    for hole, cell in zip(holes, cells):
        if hole.cell_index != cell.index:
            raise InvalidParameterError(
                f"hole/cell index mismatch at cell {cell.index}"
            )
    if not cells:
        raise InvalidParameterError("assumption quantities need at least one cell")
    d = cells[0].dim
    R = seps.R
    radii = np.array([h.radius for h in holes])
    diam_cell = cells[0].diameter
    measure = cells[0].measure
    powers = radii ** (d - 2)
    return AssumptionReport(
        epsilon=seps.epsilon,
        n_cells=len(cells),
        n_holes=int(np.count_nonzero(radii)),
        max_R=R,
        sup_a_over_R=float(radii.max()) / R,
        sum_A2=float((powers * powers).sum()) / R ** (d - 2),
        sup_A3=measure / R**d,
        sum_A4=float(powers.sum()) * diam_cell,
        sum_A6=float(powers.sum()),
        diam_over_R=diam_cell / R,
    )


def hminus1_norm(
    nu: Array, grid: Grid, tol: float = 1e-10, n_threads: Optional[int] = None
) -> float:
    """Discrete ``H^-1`` norm of a nodal density via one Poisson solve.

    Solves ``-Delta_h phi = nu`` with zero boundary values and returns
    ``sqrt(<nu, phi> h^d)``.  Homogeneous of degree one and zero exactly
    for ``nu = 0``.
    """
    nu = np.asarray(nu, dtype=float)
    if nu.shape != grid.shape:
        raise InvalidParameterError("density shape does not match grid")
    if not np.all(np.isfinite(nu)):
        raise InvalidParameterError("density must be finite at all nodes")
    h = grid.h
    with thread_pool(n_threads) as pool:
        phi, _, _ = pcg(lambda v: neg_laplacian(v, h, pool), nu, tol=tol)
    pairing = float(np.vdot(nu, phi).real) * h**grid.dim
    return math.sqrt(max(pairing, 0.0))


def capacity_density_field(
    holes: Sequence[Hole], spec: TilingSpec, grid: Grid
) -> Array:
    """Nodal field ``sum_i cap(K_i)/|A_i| 1_{A_i}`` on the grid.

    Every interior node lies in exactly one cell; nodes whose cell has no
    hole in ``holes`` get zero.
    """
    if spec.dim != grid.dim:
        raise InvalidParameterError("tiling and grid dimensions differ")
    measure = (2.0 * spec.epsilon) ** spec.dim
    values = {
        h.cell_index: capacity_ball(spec.dim, h.radius).value / measure for h in holes
    }
    axis_cells = cell_axis_indices(spec, grid.axis())
    lo = int(axis_cells.min())
    hi = int(axis_cells.max())
    ords = (axis_cells - lo) // 2
    count = (hi - lo) // 2 + 1
    dense = np.zeros((count,) * grid.dim)
    for index, value in values.items():
        pos = tuple((i - lo) // 2 for i in index)
        if all(0 <= p < count for p in pos):
            dense[pos] = value
    return dense[np.ix_(*([ords] * grid.dim))]


def ldc_deviation(
    holes: Sequence[Hole],
    mu: Potential,
    spec: TilingSpec,
    grid: Grid,
    quad: QuadratureSpec = DEFAULT_QUADRATURE,
    tol: float = 1e-10,
    n_threads: Optional[int] = None,
) -> float:
    """``H^-1`` distance between the capacity density and the lumped target.

    Under the capacity-matched construction this isolates the
    cell-averaging error of the target potential.
    """
    field = capacity_density_field(holes, spec, grid)
    lumped = lump_measure(mu, grid, quad)
    return hminus1_norm(field - lumped, grid, tol=tol, n_threads=n_threads)


def _check_test_function(g: Callable[[Array], Array], grid: Grid) -> None:
    """Require a test function to vanish on the domain boundary."""
    probe = np.linspace(0.0, 1.0, 9)
    mesh = np.meshgrid(*([probe] * (grid.dim - 1)), indexing="ij")
    sheet = np.stack([m.ravel() for m in mesh], axis=-1)
    worst = 0.0
    for ax in range(grid.dim):
        for value in (0.0, 1.0):
            pts = np.insert(sheet, ax, value, axis=1)
            worst = max(worst, float(np.abs(np.asarray(g(pts), dtype=float)).max()))
    center = np.full((1, grid.dim), 0.5)
    scale = max(float(np.abs(np.asarray(g(center), dtype=float)).max()), 1.0)
    if worst > 1e-9 * scale:
        raise InvalidParameterError(
            "test function does not vanish on the domain boundary"
        )


def dprime_pairing(
    nu: Union[Array, Sequence[Hole]],
    g: Union[Array, Callable[[Array], Array]],
    grid: Grid,
) -> float:
    """Distributional pairing ``<nu, g>`` against a smooth test function.

    ``nu`` may be a nodal field (paired by nodal quadrature) or a hole
    list, in which case the pairing is against the hole-ball capacity
    density ``sum_i cap(K_i)/|K_i| 1_{K_i}``: each nonempty ball
    contributes ``cap(K_i) * g(center)``, exact up to O(radius^2) because
    the ball average of a smooth ``g`` matches its center value to that
    order.
    """
    if callable(g):
        _check_test_function(g, grid)
        g_field = field_from_callable(grid, g)
        g_fn = g
    else:
        g_field = np.asarray(g, dtype=float)
        if g_field.shape != grid.shape:
            raise InvalidParameterError("test function field does not match grid")
        g_fn = None
    if isinstance(nu, np.ndarray):
        if nu.shape != grid.shape:
            raise InvalidParameterError("field shape does not match grid")
        return float(np.vdot(nu, g_field).real) * grid.h**grid.dim
    total = 0.0
    for hole in nu:
        if hole.is_empty:
            continue
        if g_fn is not None:
            value = float(np.asarray(g_fn(np.asarray(hole.center)[None, :]), dtype=float)[0])
        else:
            value = float(
                _multilinear_sample(grid, g_field, np.asarray(hole.center)[None, :])[0]
            )
        total += capacity_ball(hole.dim, hole.radius).value * value
    return total
