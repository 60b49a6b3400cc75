"""Uniform-grid finite-difference solver on the unit cube.

Solves two Dirichlet problems on ``(0, 1)^d``:

* the perforated Poisson problem, where nodes inside any closed hole
  ball are clamped to zero (the zero extension of the solution), and
* the limit problem ``(-Delta + mu) u = f`` with the measure ``mu``
  lumped onto node dual cells.

Both systems are symmetric positive definite and solved matrix-free by
Jacobi-preconditioned conjugate gradients.  The module also evaluates
the oscillating corrector built from ball equilibrium potentials, the
discrete pairings used as weak-convergence witnesses, and the flat
binary field export.
"""

from __future__ import annotations

import csv
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .cg import pcg
from .capacity import BALL_MASK_INFLATION, ball_potential_radial
from .errors import GeometryError, InvalidParameterError, ResolutionError
from .holes import Hole, SeparationParams, disjointness_check
from .potential import (
    DEFAULT_QUADRATURE,
    Density,
    Potential,
    QuadratureSpec,
    SumPotential,
    SurfaceGraph,
    eval_checked,
    gauss_points_on_box,
    weight_values,
)
from .stencil import neg_laplacian
from .tiling import Box, unit_box

Array = np.ndarray


@dataclass(frozen=True)
class Grid:
    """Interior nodes of a uniform tensor grid on ``(0, 1)^d``.

    Node coordinates are ``x_j = h * (j + 1)`` componentwise with
    ``h = 1 / (n + 1)``.
    """

    dim: int
    n: int

    def __post_init__(self):
        if self.dim < 1:
            raise InvalidParameterError(f"grid dimension must be >= 1, got {self.dim}")
        if self.n < 1:
            raise InvalidParameterError(f"grid needs n >= 1 interior nodes, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / (self.n + 1)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n**self.dim

    @property
    def domain(self) -> Box:
        return unit_box(self.dim)

    def axis(self) -> Array:
        """Interior node coordinates along one axis."""
        return (np.arange(self.n) + 1.0) * self.h

    def zeros(self) -> Array:
        return np.zeros(self.shape)


@dataclass(frozen=True)
class SolveStats:
    iterations: int
    residual: float
    seconds: float


@contextmanager
def thread_pool(n_threads: Optional[int]):
    """Context manager yielding a worker pool, or None for serial kernels."""
    if n_threads is None or n_threads <= 1:
        yield None
        return
    pool = ThreadPoolExecutor(max_workers=n_threads)
    try:
        yield pool
    finally:
        pool.shutdown(wait=True)


def field_from_callable(grid: Grid, fn: Callable[[Array], Array]) -> Array:
    """Evaluate a vectorised callable on all interior nodes, slab by slab."""
    xs = grid.axis()
    out = np.empty(grid.shape)
    if grid.dim == 1:
        return np.asarray(fn(xs[:, None]), dtype=float)
    tail = np.meshgrid(*([xs] * (grid.dim - 1)), indexing="ij")
    tail_pts = np.stack([g.ravel() for g in tail], axis=-1)
    slab = np.empty((tail_pts.shape[0], grid.dim))
    slab[:, 1:] = tail_pts
    for i, x0 in enumerate(xs):
        slab[:, 0] = x0
        out[i] = np.asarray(fn(slab), dtype=float).reshape(out[i].shape)
    return out


def l2_norm(u: Array, grid: Grid) -> float:
    """Discrete L2 norm ``sqrt(sum u^2 h^d)``."""
    return float(math.sqrt(float(np.vdot(u, u).real) * grid.h**grid.dim))


def l2_distance(u1: Array, u2: Array, grid: Grid) -> float:
    """Discrete L2 distance; symmetric, zero iff the fields agree."""
    return l2_norm(u1 - u2, grid)


def _node_box(grid: Grid, center, radius: float):
    """Index slices of nodes within ``radius`` of ``center`` (bounding box)."""
    h = grid.h
    slices = []
    for c in center:
        lo = max(0, math.ceil((c - radius) / h - 1.0))
        hi = min(grid.n - 1, math.floor((c + radius) / h - 1.0))
        if hi < lo:
            return None
        slices.append(slice(lo, hi + 1))
    return tuple(slices)


def _box_radii2(grid: Grid, slices, center) -> Array:
    xs = grid.axis()
    r2 = np.zeros(tuple(s.stop - s.start for s in slices))
    for ax, (s, c) in enumerate(zip(slices, center)):
        view = [None] * len(slices)
        view[ax] = slice(None)
        r2 = r2 + (xs[s] - c)[tuple(view)] ** 2
    return r2


def _nearest_node(grid: Grid, center) -> tuple[int, ...]:
    return tuple(
        int(np.clip(round(c / grid.h) - 1, 0, grid.n - 1)) for c in center
    )


def hole_mask(grid: Grid, holes: Sequence[Hole], *, override_tiny: bool = False) -> Array:
    """Boolean mask of nodes inside any closed hole ball.

    Masks use the recentred staircase (nodes with distance at most
    ``radius + h/3``), which keeps the discrete holes capacity-faithful.
    Nonempty holes must satisfy ``radius >= 2h``; with ``override_tiny``
    an under-resolved hole is mapped to its nearest node instead (a node
    constraint has its own O(h) effective capacity, so this is opt-in
    and warns).
    """
    mask = np.zeros(grid.shape, dtype=bool)
    h = grid.h
    tiny = 0
    for hole in holes:
        if hole.is_empty:
            continue
        if not hole.is_ball:
            raise InvalidParameterError(
                f"solver accepts only ball holes, got template {hole.template_shape!r}"
            )
        if hole.radius < 2.0 * h:
            if not override_tiny:
                raise ResolutionError(
                    f"hole radius {hole.radius:.6g} < 2h = {2 * h:.6g}; "
                    "refine the grid or enable the tiny-hole override"
                )
            mask[_nearest_node(grid, hole.center)] = True
            tiny += 1
            continue
        masked_radius = hole.radius + BALL_MASK_INFLATION * h
        slices = _node_box(grid, hole.center, masked_radius)
        if slices is None:
            continue
        r2 = _box_radii2(grid, slices, hole.center)
        mask[slices] |= r2 <= masked_radius**2
    if tiny:
        warnings.warn(
            f"{tiny} hole(s) below the 2h resolution limit were collapsed to "
            "single-node constraints; their effective capacity is O(h)",
            RuntimeWarning,
            stacklevel=2,
        )
    return mask


def solve_perforated(
    f: Array,
    holes: Sequence[Hole],
    grid: Grid,
    tol: float = 1e-8,
    *,
    override_tiny: bool = False,
    n_threads: Optional[int] = None,
    maxiter: Optional[int] = None,
) -> tuple[Array, SolveStats]:
    """Solve ``-Delta u = f`` with zero values on holes and the boundary.

    The output is the zero extension: it is exactly zero on hole nodes.
    """
    if not (tol > 0.0):
        raise InvalidParameterError("tolerance must be positive")
    f = np.asarray(f, dtype=float)
    if f.shape != grid.shape:
        raise InvalidParameterError("right-hand side shape does not match grid")
    mask = hole_mask(grid, holes, override_tiny=override_tiny)
    h = grid.h
    inv_diag = 1.0 / (2.0 * grid.dim / h**2 + np.zeros(grid.shape))
    start = time.perf_counter()
    with thread_pool(n_threads) as pool:

        def apply_op(v):
            w = neg_laplacian(v, h, pool)
            w[mask] = 0.0
            return w

        b = f.copy()
        b[mask] = 0.0
        u, iterations, residual = pcg(
            apply_op, b, tol=tol, inv_diag=inv_diag, maxiter=maxiter
        )
    u[mask] = 0.0
    return u, SolveStats(iterations, residual, time.perf_counter() - start)


def _dual_cell_indices(grid: Grid, coords: Array) -> Array:
    """Dual-cell node index along one axis; half-open ``((k-1/2)h, (k+1/2)h]``.

    Indices clip to the first and last interior node, so the end dual
    cells absorb the half-spacing skin next to the domain boundary;
    coordinates outside ``(0, 1)`` return -1.
    """
    h = grid.h
    k = np.ceil(coords / h - 0.5).astype(int)
    k = np.clip(k, 1, grid.n)
    idx = k - 1
    idx[(coords <= 0.0) | (coords >= 1.0)] = -1
    return idx


def _node_chunks(grid: Grid, max_points: int = 1 << 22):
    """Yield ``(row_slice, points)`` chunks covering all interior nodes."""
    xs = grid.axis()
    if grid.dim == 1:
        yield slice(0, grid.n), xs[:, None]
        return
    tail = np.meshgrid(*([xs] * (grid.dim - 1)), indexing="ij")
    tail_pts = np.stack([g.ravel() for g in tail], axis=-1)
    rows_per_chunk = max(1, max_points // tail_pts.shape[0])
    for start in range(0, grid.n, rows_per_chunk):
        stop = min(start + rows_per_chunk, grid.n)
        rows = stop - start
        pts = np.empty((rows * tail_pts.shape[0], grid.dim))
        pts[:, 0] = np.repeat(xs[start:stop], tail_pts.shape[0])
        pts[:, 1:] = np.tile(tail_pts, (rows, 1))
        yield slice(start, stop), pts


def lump_measure(
    mu: Potential, grid: Grid, quad: QuadratureSpec = DEFAULT_QUADRATURE
) -> Array:
    """Lump a potential onto node dual cells: ``w_j = mu(V_j) / h^d``.

    ``V_j`` is the half-open h-cube centered at node ``j`` (consistent
    with the tiling convention).  Densities use tensor Gauss quadrature
    over each dual cell (midpoint sampling when ``volume_order == 1``),
    so a constant density lumps to itself at every node.  Surface
    measures deposit footprint samples of the weighted area element into
    the dual cell holding the lifted point; samples in the half-spacing
    skin along the boundary go to the outermost interior node, so the
    lumped total captures the full surface mass inside the domain.
    """
    if isinstance(mu, SumPotential):
        out = grid.zeros()
        for part in mu.parts:
            out += lump_measure(part, grid, quad)
        return out
    h = grid.h
    if isinstance(mu, Density):
        if quad.volume_order == 1:
            values = field_from_callable(grid, mu.f)
            if np.any(values < 0.0):
                raise InvalidParameterError("density must be nonnegative")
            return values
        half = np.full(grid.dim, 0.5 * h)
        offsets, qweights = gauss_points_on_box(-half, half, quad.volume_order)
        out = np.zeros(grid.shape)
        flat = out.reshape(grid.n, -1)
        for rows, pts in _node_chunks(grid):
            acc = np.zeros(pts.shape[0])
            for q in range(offsets.shape[0]):
                acc += qweights[q] * eval_checked(mu.f, pts + offsets[q])
            flat[rows] = acc.reshape(rows.stop - rows.start, -1)
        if np.any(out < 0.0):
            raise InvalidParameterError("density must be nonnegative")
        return out / h**grid.dim
    if isinstance(mu, SurfaceGraph):
        refine = quad.surface_refine
        m = (grid.n + 1) * refine
        step = 1.0 / m
        axis = (np.arange(m) + 0.5) * step
        grids = np.meshgrid(*([axis] * (grid.dim - 1)), indexing="ij")
        points = np.stack([g.ravel() for g in grids], axis=-1)
        heights = eval_checked(mu.height, points)
        grads = np.asarray(mu.grad(points), dtype=float)
        if grads.ndim == 1:
            grads = grads[:, None]
        element = np.sqrt(1.0 + (grads * grads).sum(axis=1))
        weights = weight_values(mu.weight, points)
        if np.any(weights < 0.0):
            raise InvalidParameterError("surface weight must be nonnegative")
        masses = weights * element * step ** (grid.dim - 1)
        idx = [_dual_cell_indices(grid, points[:, k]) for k in range(grid.dim - 1)]
        idx.append(_dual_cell_indices(grid, heights))
        keep = np.ones(points.shape[0], dtype=bool)
        for component in idx:
            keep &= component >= 0
        flat = np.zeros(grid.size)
        if np.any(keep):
            lin = np.ravel_multi_index(tuple(c[keep] for c in idx), grid.shape)
            np.add.at(flat, lin, masses[keep])
        return flat.reshape(grid.shape) / h**grid.dim
    raise InvalidParameterError(f"unknown potential variant: {type(mu).__name__}")


def solve_limit(
    f: Array,
    weights: Array,
    grid: Grid,
    tol: float = 1e-8,
    *,
    n_threads: Optional[int] = None,
    maxiter: Optional[int] = None,
) -> tuple[Array, SolveStats]:
    """Solve the limit problem ``(-Delta + mu) u = f`` with lumped ``mu``.

    ``weights`` are the nonnegative dual-cell densities from
    :func:`lump_measure`; zero weights reduce to the plain Poisson solve.
    """
    if not (tol > 0.0):
        raise InvalidParameterError("tolerance must be positive")
    f = np.asarray(f, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if f.shape != grid.shape or weights.shape != grid.shape:
        raise InvalidParameterError("field shapes do not match grid")
    if np.any(weights < 0.0):
        raise InvalidParameterError("lumped measure must be nonnegative")
    h = grid.h
    inv_diag = 1.0 / (2.0 * grid.dim / h**2 + weights)
    start = time.perf_counter()
    with thread_pool(n_threads) as pool:

        def apply_op(v):
            w = neg_laplacian(v, h, pool)
            w += weights * v
            return w

        u, iterations, residual = pcg(
            apply_op, f, tol=tol, inv_diag=inv_diag, maxiter=maxiter
        )
    return u, SolveStats(iterations, residual, time.perf_counter() - start)


def _cutoff(t: Array) -> Array:
    """C^2 cutoff: 1 for ``t <= 1/2``, 0 for ``t >= 1``, quintic in between."""
    s = np.clip(2.0 * t - 1.0, 0.0, 1.0)
    return 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s**2)


CUTOFF_NAME = "quintic smoothstep on [1/2, 1]"


def corrector_field(
    holes: Sequence[Hole], seps: SeparationParams, grid: Grid
) -> tuple[Array, float]:
    """Oscillating corrector ``w = 1 - sum_i cutoff_i * H_i`` on the grid.

    ``H_i`` is the ball equilibrium potential and the cutoff ramps from 1
    to 0 over the outer half of the annulus between the hole and its
    separation ball.  Returns the nodal field and the discrete L2 norm of
    the deviation ``V = 1 - w``.  The field is exactly zero on hole nodes
    and exactly one outside all separation balls.
    """
    report = disjointness_check(holes, seps)
    if not report.ok:
        raise GeometryError(
            f"separation geometry invalid: {len(report.overlapping_pairs)} "
            f"overlapping pair(s), {len(report.inclusion_violations)} "
            "cell-inclusion violation(s)"
        )
    R = seps.R
    d = grid.dim
    deviation = grid.zeros()
    for hole in holes:
        if hole.is_empty:
            continue
        margin = seps.margin(hole.radius)
        if margin <= 0.0:
            raise GeometryError(
                f"hole in cell {hole.cell_index} has radius {hole.radius:.6g} "
                f">= separation radius {R:.6g}; cutoff margin is empty"
            )
        slices = _node_box(grid, hole.center, R)
        if slices is None:
            continue
        r = np.sqrt(_box_radii2(grid, slices, hole.center))
        inside = r < R
        if not np.any(inside):
            continue
        phi = _cutoff((r - hole.radius) / margin)
        pot = ball_potential_radial(r, hole.radius, d)
        deviation[slices] += np.where(inside, phi * pot, 0.0)
    v_norm = l2_norm(deviation, grid)
    return 1.0 - deviation, v_norm


def weak_witness(u1: Array, u2: Array, g: Array, grid: Grid) -> float:
    """Discrete ``H_0^1`` pairing of ``u1 - u2`` against ``g``.

    Forward differences on the zero-extended fields, so boundary jumps
    are included and the pairing is symmetric in discretisation bias.
    """
    if u1.shape != grid.shape or u2.shape != grid.shape or g.shape != grid.shape:
        raise InvalidParameterError("field shapes do not match grid")
    e = u1 - u2
    h = grid.h
    total = 0.0
    pad_width = [(0, 0)] * grid.dim
    for ax in range(grid.dim):
        pw = list(pad_width)
        pw[ax] = (1, 1)
        de = np.diff(np.pad(e, pw), axis=ax)
        dg = np.diff(np.pad(g, pw), axis=ax)
        total += float(np.vdot(de, dg).real)
    return total * h ** (grid.dim - 2)


def restrict(u_fine: Array, fine: Grid, coarse: Grid) -> Array:
    """Exact nodal injection from a nested finer grid.

    Requires ``(fine.n + 1)`` to be a multiple of ``(coarse.n + 1)``.
    """
    stride, rem = divmod(fine.n + 1, coarse.n + 1)
    if rem != 0 or stride < 1:
        raise InvalidParameterError(
            f"grids are not nested: n_fine={fine.n}, n_coarse={coarse.n}"
        )
    sl = tuple(slice(stride - 1, None, stride) for _ in range(fine.dim))
    out = u_fine[sl]
    if out.shape != coarse.shape:
        raise InvalidParameterError("restriction produced a mismatched shape")
    return out.copy()


def write_field(path, grid: Grid, u: Array) -> None:
    """Flat binary export: one ASCII header line ``d n h``, then node
    values in lexicographic index order as little-endian float64."""
    if u.shape != grid.shape:
        raise InvalidParameterError("field shape does not match grid")
    with open(path, "wb") as fh:
        fh.write(f"{grid.dim} {grid.n} {grid.h!r}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(u, dtype="<f8").tobytes())


def read_field(path) -> tuple[Grid, Array]:
    """Read a field written by :func:`write_field`."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        dim, n = int(header[0]), int(header[1])
        grid = Grid(dim, n)
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != grid.size:
        raise InvalidParameterError(f"field file has {data.size} values, expected {grid.size}")
    return grid, data.reshape(grid.shape).copy()


def _multilinear_sample(grid: Grid, u: Array, points: Array) -> Array:
    """Multilinear interpolation with the implied zero boundary values."""
    h = grid.h
    t = points / h - 1.0
    base = np.floor(t).astype(int)
    frac = t - base
    values = np.zeros(points.shape[0])
    for corner in range(1 << grid.dim):
        idx = base.copy()
        weight = np.ones(points.shape[0])
        for ax in range(grid.dim):
            bit = (corner >> ax) & 1
            idx[:, ax] = base[:, ax] + bit
            weight *= frac[:, ax] if bit else 1.0 - frac[:, ax]
        inside = np.all((idx >= 0) & (idx < grid.n), axis=1)
        if np.any(inside):
            lin = np.ravel_multi_index(tuple(idx[inside].T), grid.shape)
            values[inside] += weight[inside] * u.ravel()[lin]
    return values


def sample_line_csv(path, grid: Grid, u: Array, start, end, num: int = 101) -> None:
    """Sample a field along a segment and write ``t, x_1..x_d, value`` rows."""
    if num < 2:
        raise InvalidParameterError("line sampling needs at least 2 points")
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    ts = np.linspace(0.0, 1.0, num)
    points = start[None, :] + ts[:, None] * (end - start)[None, :]
    values = _multilinear_sample(grid, u, points)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"x{k + 1}" for k in range(grid.dim)] + ["value"])
        for t, p, v in zip(ts, points, values):
            writer.writerow(
                [format(t, ".17g")]
                + [format(c, ".17g") for c in p]
                + [format(v, ".17g")]
            )
