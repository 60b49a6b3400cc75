"""Nonnegative target potentials and their cell masses.

A potential is a nonnegative Borel measure given in one of three forms:
a density (``L^p`` with ``p >= d``), a weighted surface measure of a
Lipschitz graph ``x_d = s(x')``, or a finite sum of such parts.  The
central operation is the mass ``mu(A_i)`` of a lattice cell, evaluated
by tensor Gauss quadrature for densities and by midpoint quadrature of
``weight * sqrt(1 + |grad s|^2)`` over the cell footprint for graphs.

All callables are vectorised: they take points of shape ``(N, k)`` and
return shape ``(N,)`` (or ``(N, k)`` for gradients).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import EvaluationError, InvalidParameterError
from .tiling import Box, Cell, TilingSpec, cell_axis_indices, cells_intersecting


@dataclass(frozen=True)
class QuadratureSpec:
    """Quadrature resolution: Gauss points per axis for densities and
    footprint subdivisions per axis for surface measures."""

    volume_order: int = 4
    surface_refine: int = 16

    def __post_init__(self):
        if self.volume_order < 1 or self.surface_refine < 1:
            raise InvalidParameterError("quadrature orders must be >= 1")


DEFAULT_QUADRATURE = QuadratureSpec()


@dataclass(frozen=True)
class Density:
    """Absolutely continuous part ``f(x) dx`` with nonnegative ``f``.

    ``p`` is the declared integrability exponent (metadata only).
    """

    f: Callable[[np.ndarray], np.ndarray]
    p: Optional[float] = None


@dataclass(frozen=True)
class SurfaceGraph:
    """Weighted surface measure of the graph ``x_d = height(x')``.

    ``grad`` must return the gradient of ``height`` (shape ``(N, d-1)``),
    ``weight`` is a bounded nonnegative function of ``x'`` (or a scalar),
    and ``lip`` is a Lipschitz constant for ``height``.
    """

    height: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    weight: Union[float, Callable[[np.ndarray], np.ndarray]] = 1.0
    lip: float = 0.0


@dataclass(frozen=True)
class SumPotential:
    """Finite sum of potentials."""

    parts: tuple["Potential", ...]

    def __post_init__(self):
        if not self.parts:
            raise InvalidParameterError("sum potential needs at least one part")


Potential = Union[Density, SurfaceGraph, SumPotential]


def gauss_points_on_box(lo: np.ndarray, hi: np.ndarray, order: int):
    """Tensor Gauss-Legendre nodes and weights on the box [lo, hi]."""
    ref_x, ref_w = np.polynomial.legendre.leggauss(order)
    dim = lo.size
    axes_x = []
    axes_w = []
    for k in range(dim):
        mid = 0.5 * (lo[k] + hi[k])
        half = 0.5 * (hi[k] - lo[k])
        axes_x.append(mid + half * ref_x)
        axes_w.append(half * ref_w)
    grids = np.meshgrid(*axes_x, indexing="ij")
    points = np.stack([g.ravel() for g in grids], axis=-1)
    weights = axes_w[0]
    for k in range(1, dim):
        weights = np.multiply.outer(weights, axes_w[k])
    return points, weights.ravel()


def eval_checked(f, points: np.ndarray) -> np.ndarray:
    """Evaluate a vectorised callable and reject non-finite output."""
    values = np.asarray(f(points), dtype=float)
    if not np.all(np.isfinite(values)):
        raise EvaluationError("potential callable returned non-finite values")
    return values


def weight_values(weight, points: np.ndarray) -> np.ndarray:
    if callable(weight):
        return eval_checked(weight, points)
    return np.full(points.shape[0], float(weight))


def _footprint_midpoints(cell: Cell, refine: int):
    lo = np.asarray(cell.lower[:-1])
    hi = np.asarray(cell.upper[:-1])
    axes = [
        lo[k] + (hi[k] - lo[k]) * (np.arange(refine) + 0.5) / refine
        for k in range(lo.size)
    ]
    grids = np.meshgrid(*axes, indexing="ij")
    points = np.stack([g.ravel() for g in grids], axis=-1)
    area = float(np.prod((hi - lo) / refine))
    return points, area


def _surface_cell_mass(mu: SurfaceGraph, cell: Cell, quad: QuadratureSpec) -> float:
    spec = TilingSpec(cell.dim, cell.epsilon)
    points, area = _footprint_midpoints(cell, quad.surface_refine)
    heights = eval_checked(mu.height, points)
    # classify the lifted sample with the half-open cell convention
    lifted_last = cell_axis_indices(spec, heights)
    keep = lifted_last == cell.index[-1]
    for k in range(cell.dim - 1):
        keep &= cell_axis_indices(spec, points[:, k]) == cell.index[k]
    if not np.any(keep):
        return 0.0
    points = points[keep]
    grads = np.asarray(mu.grad(points), dtype=float)
    if grads.ndim == 1:
        grads = grads[:, None]
    element = np.sqrt(1.0 + (grads * grads).sum(axis=1))
    weights = weight_values(mu.weight, points)
    if np.any(weights < 0.0):
        raise InvalidParameterError("surface weight must be nonnegative")
    return float((weights * element).sum() * area)


def cell_mass(mu: Potential, cell: Cell, quad: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Mass ``mu(A_i)`` of one cell.

    Densities use tensor Gauss quadrature over the cell box (exact for
    constants); surface graphs use midpoint quadrature of the weighted
    area element over the part of the footprint whose lifted point lands
    in this cell; sums add exactly.
    """
    if isinstance(mu, SumPotential):
        return sum(cell_mass(part, cell, quad) for part in mu.parts)
    if isinstance(mu, SurfaceGraph):
        return _surface_cell_mass(mu, cell, quad)
    if isinstance(mu, Density):
        lo = np.asarray(cell.lower)
        hi = np.asarray(cell.upper)
        points, weights = gauss_points_on_box(lo, hi, quad.volume_order)
        values = eval_checked(mu.f, points)
        if np.any(values < 0.0):
            raise InvalidParameterError("density must be nonnegative")
        return float(values @ weights)
    raise InvalidParameterError(f"unknown potential variant: {type(mu).__name__}")


@dataclass(frozen=True)
class CellAverageField:
    """Piecewise-constant field ``mu(A_i) / |A_i|`` on the intersecting cells."""

    cells: tuple[Cell, ...]
    masses: np.ndarray
    values: np.ndarray

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    def by_index(self) -> dict:
        return {cell.index: float(v) for cell, v in zip(self.cells, self.values)}


def cell_average_field(
    mu: Potential,
    spec: TilingSpec,
    domain: Box,
    quad: QuadratureSpec = DEFAULT_QUADRATURE,
) -> CellAverageField:
    """Cell averages over all cells meeting ``domain``, in index order."""
    cells = cells_intersecting(spec, domain)
    masses = np.array([cell_mass(mu, cell, quad) for cell in cells])
    measure = (2.0 * spec.epsilon) ** spec.dim
    return CellAverageField(tuple(cells), masses, masses / measure)


@dataclass(frozen=True)
class MassScalingResult:
    """Largest cell mass per epsilon and the fitted log-log exponent."""

    epsilons: tuple[float, ...]
    max_masses: tuple[float, ...]
    exponent: Optional[float]

    @property
    def degenerate(self) -> bool:
        return self.exponent is None


def max_cell_mass_scaling(
    mu: Potential,
    dim: int,
    domain: Box,
    eps_list: Sequence[float],
    quad: QuadratureSpec = DEFAULT_QUADRATURE,
) -> MassScalingResult:
    """Fit the scaling exponent of ``max_i mu(A_i)`` against epsilon.

    For a graph measure the exponent approaches ``d - 1``, for a bounded
    density ``d``.  Any zero maximum makes the fit degenerate.
    """
    if len(eps_list) < 3:
        raise InvalidParameterError("exponent fit needs at least 3 epsilon values")
    maxima = []
    for eps in eps_list:
        field = cell_average_field(mu, TilingSpec(dim, eps), domain, quad)
        maxima.append(float(field.masses.max()) if field.masses.size else 0.0)
    if any(m <= 0.0 for m in maxima):
        return MassScalingResult(tuple(eps_list), tuple(maxima), None)
    slope = float(np.polyfit(np.log(np.asarray(eps_list)), np.log(np.asarray(maxima)), 1)[0])
    return MassScalingResult(tuple(eps_list), tuple(maxima), slope)


# ---------------------------------------------------------------------------
# named constructors (the config-file surface)
# ---------------------------------------------------------------------------


def make_constant(dim: int, c: float) -> Density:
    """Uniform density ``c`` on all of R^d."""
    if c < 0.0:
        raise InvalidParameterError("constant density must be nonnegative")
    return Density(f=lambda x: np.full(x.shape[0], float(c)), p=math.inf)


def make_box(dim: int, c: float, lo: float = 0.0, hi: float = 1.0) -> Density:
    """Uniform density ``c`` on the box ``(lo, hi)^d``, zero outside."""
    if c < 0.0:
        raise InvalidParameterError("box density must be nonnegative")
    if lo >= hi:
        raise InvalidParameterError("box needs lo < hi")

    def f(x):
        inside = np.all((x > lo) & (x < hi), axis=1)
        return np.where(inside, float(c), 0.0)

    return Density(f=f, p=math.inf)


def make_sine_density(dim: int, amplitude: float) -> Density:
    """Density ``amplitude * prod_k sin(pi x_k)`` on the unit cube, zero outside."""
    if amplitude < 0.0:
        raise InvalidParameterError("sine density amplitude must be nonnegative")

    def f(x):
        inside = np.all((x > 0.0) & (x < 1.0), axis=1)
        return np.where(inside, amplitude * np.prod(np.sin(np.pi * x), axis=1), 0.0)

    return Density(f=f, p=math.inf)


def make_plane(dim: int, z0: float, weight: float = 1.0) -> SurfaceGraph:
    """Weighted surface measure of the hyperplane ``x_d = z0``."""
    if weight < 0.0:
        raise InvalidParameterError("plane weight must be nonnegative")
    return SurfaceGraph(
        height=lambda xp: np.full(xp.shape[0], float(z0)),
        grad=lambda xp: np.zeros_like(xp),
        weight=float(weight),
        lip=0.0,
    )


def make_graph(
    dim: int, z0: float, amplitude: float, frequency: float = 1.0, weight: float = 1.0
) -> SurfaceGraph:
    """Graph ``x_d = z0 + amplitude * prod_k sin(2 pi frequency x'_k)``."""
    if weight < 0.0:
        raise InvalidParameterError("graph weight must be nonnegative")
    omega = 2.0 * math.pi * frequency

    def height(xp):
        return z0 + amplitude * np.prod(np.sin(omega * xp), axis=1)

    def grad(xp):
        s = np.sin(omega * xp)
        c = np.cos(omega * xp)
        prod = np.prod(s, axis=1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(s != 0.0, prod / s, 0.0)
        # recompute columns that contain a zero factor explicitly
        bad = np.nonzero((s == 0.0).any(axis=1))[0]
        for row in bad:
            for k in range(xp.shape[1]):
                others = np.delete(s[row], k)
                ratio[row, k] = np.prod(others)
        return amplitude * omega * c * ratio

    lip = abs(amplitude) * omega * math.sqrt(max(dim - 1, 1))
    return SurfaceGraph(height=height, grad=grad, weight=float(weight), lip=lip)


def make_sum(dim: int, parts: Sequence[Potential]) -> SumPotential:
    return SumPotential(tuple(parts))


POTENTIAL_CONSTRUCTORS = {
    "constant": make_constant,
    "box": make_box,
    "sine_density": make_sine_density,
    "plane": make_plane,
    "graph": make_graph,
    "sum": make_sum,
    "zero": lambda dim: make_constant(dim, 0.0),
}


def parse_potential(text: str, dim: int) -> Potential:
    """Build a potential from a constructor expression.

    The grammar is a single call from the registry with numeric literal
    arguments, e.g. ``constant(40)``, ``plane(0.5, 20)``,
    ``sum([box(1), plane(0.5, 8)])``.
    """
    import ast

    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise InvalidParameterError(f"cannot parse potential spec {text!r}: {exc}") from exc

    def build(node):
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in POTENTIAL_CONSTRUCTORS:
                raise InvalidParameterError(f"unknown potential constructor in {text!r}")
            args = [build(a) for a in node.args]
            kwargs = {kw.arg: build(kw.value) for kw in node.keywords}
            return POTENTIAL_CONSTRUCTORS[node.func.id](dim, *args, **kwargs)
        if isinstance(node, ast.List):
            return [build(e) for e in node.elts]
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
            return -build(node.operand)
        raise InvalidParameterError(f"unsupported expression in potential spec {text!r}")

    result = build(tree.body)
    if not isinstance(result, (Density, SurfaceGraph, SumPotential)):
        raise InvalidParameterError(f"potential spec {text!r} is not a potential")
    return result
