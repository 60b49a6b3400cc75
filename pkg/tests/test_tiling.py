import numpy as np
import pytest

from perfhom.errors import InvalidParameterError
from perfhom.tiling import (
    Box,
    Cell,
    TilingSpec,
    cell_of_point,
    cells_intersecting,
    unit_box,
)


def brute_force_cells(spec, domain, index_range):
    """Independent oracle: test every candidate index by interval overlap."""
    import itertools

    eps = spec.epsilon
    found = []
    for index in itertools.product(index_range, repeat=spec.dim):
        if any(i % 2 for i in index):
            continue
        cell = Cell(index, eps)
        if all(
            lo < u and l < hi
            for lo, hi, l, u in zip(domain.lo, domain.hi, cell.lower, cell.upper)
        ):
            found.append(index)
    return sorted(found)


def test_unit_cube_half_epsilon_gives_eight_cells():
    spec = TilingSpec(3, 0.5)
    cells = cells_intersecting(spec, unit_box(3))
    indices = [c.index for c in cells]
    assert len(cells) == 8
    assert sorted(indices) == brute_force_cells(spec, unit_box(3), range(-6, 7))
    assert set(indices) == {(i, j, k) for i in (0, 2) for j in (0, 2) for k in (0, 2)}
    centers = {c.center for c in cells}
    assert centers == {(i * 0.5, j * 0.5, k * 0.5) for i in (0, 2) for j in (0, 2) for k in (0, 2)}


def test_epsilon_one_single_covering_cell():
    cells = cells_intersecting(TilingSpec(3, 1.0), unit_box(3))
    assert len(cells) == 1
    assert cells[0].index == (0, 0, 0)


def test_intersections_never_empty_for_nonempty_domain():
    for eps in (0.3, 0.11, 2.7):
        box = Box((4.2, -1.3, 0.05), (4.3, -1.2, 0.15))
        assert cells_intersecting(TilingSpec(3, eps), box)


def test_lexicographic_order_and_uniqueness():
    cells = cells_intersecting(TilingSpec(3, 0.25), unit_box(3))
    indices = [c.index for c in cells]
    assert indices == sorted(indices)
    assert len(set(indices)) == len(indices)


def test_cell_geometry_fields():
    cell = Cell((2, 0, -4), 0.25)
    assert cell.center == (0.5, 0.0, -1.0)
    assert cell.measure == 0.5**3
    assert cell.diameter == pytest.approx(0.5 * np.sqrt(3), rel=1e-15)
    assert cell.contains(cell.center)


def test_cell_of_point_half_open_convention():
    spec = TilingSpec(3, 0.5)
    assert cell_of_point(spec, (0.0, 0.0, 0.0)).index == (0, 0, 0)
    # upper face belongs to the lower cell
    assert cell_of_point(spec, (0.5, 0.0, 0.0)).index == (0, 0, 0)
    assert cell_of_point(spec, (0.5 + 1e-12, 0.0, 0.0)).index == (2, 0, 0)


def test_partition_property_random_points():
    rng = np.random.default_rng(7)
    spec = TilingSpec(3, 0.125)
    domain = unit_box(3)
    cells = cells_intersecting(spec, domain)
    by_index = {c.index: c for c in cells}
    points = rng.uniform(0.0, 1.0, size=(500, 3))
    for x in points:
        owners = [c.index for c in cells if c.contains(x)]
        assert len(owners) == 1
        assert cell_of_point(spec, x).index == owners[0]
        assert owners[0] in by_index


def test_cell_count_brackets_domain_volume():
    domain = unit_box(3)
    for eps in (0.5, 0.25, 0.125):
        spec = TilingSpec(3, eps)
        cells = cells_intersecting(spec, domain)
        measure = cells[0].measure
        fully_inside = [
            c
            for c in cells
            if all(l >= 0.0 and u <= 1.0 for l, u in zip(c.lower, c.upper))
        ]
        assert measure * len(fully_inside) <= 1.0 <= measure * len(cells)


def test_invalid_parameters_rejected():
    with pytest.raises(InvalidParameterError):
        TilingSpec(2, 0.5)
    with pytest.raises(InvalidParameterError):
        TilingSpec(3, 0.0)
    with pytest.raises(InvalidParameterError):
        TilingSpec(3, -1.0)
    with pytest.raises(InvalidParameterError):
        Box((0.0, 0.0), (1.0,))
