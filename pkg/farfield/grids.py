import logging

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from polars import DataFrame
from scipy import interpolate, spatial

import farfield.names as names

from farfield.errors import RejectedInput
from farfield.operators import OperatorSpec

_logger = logging.getLogger(__name__)

RING_TOLERANCE = 1e-9
# Samples per stencil segment when looking for the first boundary crossing.
SEGMENT_SAMPLES = 16
BISECTION_STEPS = 60


def _ring_index(r: float, r_in: float, spacing: float, count: int) -> int | None:
    position = (r - r_in) / spacing
    index = int(np.rint(position))
    if 0 <= index < count and abs(position - index) <= RING_TOLERANCE * max(1.0, position):
        return index
    return None


@dataclass(frozen=True)
class RadialGrid:
    """
    Uniform grid on [r_in, r_out]. With r_in = 0 the grid is a ball and the first node is its center.
    """

    r_in: float
    r_out: float
    nodes: int

    def __post_init__(self):
        if not (0 <= self.r_in < self.r_out < np.inf) or self.nodes < 3:
            raise RejectedInput(
                f"Invalid radial grid: {(self.r_in, self.r_out, self.nodes)}"
            )

    @classmethod
    def with_spacing(cls, r_in: float, r_out: float, spacing: float) -> "RadialGrid":
        if not spacing > 0:
            raise RejectedInput(f"Invalid spacing: {spacing}")
        intervals = int(np.ceil((r_out - r_in) / spacing - 1e-9))
        return cls(float(r_in), float(r_out), max(intervals, 2) + 1)

    @property
    def spacing(self) -> float:
        return (self.r_out - self.r_in) / (self.nodes - 1)

    @property
    def includes_center(self) -> bool:
        return self.r_in == 0

    @property
    def node_count(self) -> int:
        return self.nodes

    def radii(self) -> np.ndarray:
        return np.linspace(self.r_in, self.r_out, self.nodes)

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.nodes, dtype=bool)
        mask[-1] = True
        if not self.includes_center:
            mask[0] = True
        return mask

    def ring_index(self, r: float) -> int | None:
        return _ring_index(r, self.r_in, self.spacing, self.nodes)

    def refined(self) -> "RadialGrid":
        return RadialGrid(self.r_in, self.r_out, 2 * (self.nodes - 1) + 1)


@dataclass(frozen=True)
class PolarGrid:
    """
    Tensor grid of rings times equally spaced angles. Disc grids (r_in = 0) share one center node.

    Nodes are ordered ring by ring, angles counterclockwise from the positive x₁ axis.
    """

    r_in: float
    r_out: float
    radial_nodes: int
    angular_nodes: int

    def __post_init__(self):
        valid_radii = 0 <= self.r_in < self.r_out < np.inf
        if not valid_radii or self.radial_nodes < 3:
            raise RejectedInput(
                f"Invalid polar grid: {(self.r_in, self.r_out, self.radial_nodes)}"
            )
        if self.angular_nodes < 8 or self.angular_nodes % 2:
            raise RejectedInput(f"Invalid angular node count: {self.angular_nodes}")

    @property
    def includes_center(self) -> bool:
        return self.r_in == 0

    @property
    def radial_spacing(self) -> float:
        return (self.r_out - self.r_in) / (self.radial_nodes - 1)

    @property
    def angular_spacing(self) -> float:
        return 2 * np.pi / self.angular_nodes

    @property
    def node_count(self) -> int:
        rings = self.radial_nodes - 1 if self.includes_center else self.radial_nodes
        return int(self.includes_center) + rings * self.angular_nodes

    def radii(self) -> np.ndarray:
        return np.linspace(self.r_in, self.r_out, self.radial_nodes)

    def angles(self) -> np.ndarray:
        return np.arange(self.angular_nodes) * self.angular_spacing

    def ring_nodes(self, ring: int) -> np.ndarray:
        if self.includes_center:
            if ring == 0:
                return np.array([0])
            start = 1 + (ring - 1) * self.angular_nodes
        else:
            start = ring * self.angular_nodes
        return np.arange(start, start + self.angular_nodes)

    def ring_index(self, r: float) -> int | None:
        return _ring_index(r, self.r_in, self.radial_spacing, self.radial_nodes)

    @cached_property
    def _coordinates(self) -> np.ndarray:
        rings = self.radii()[1:] if self.includes_center else self.radii()
        angles = self.angles()
        x = np.outer(rings, np.cos(angles)).ravel()
        y = np.outer(rings, np.sin(angles)).ravel()
        points = np.column_stack([x, y])
        if self.includes_center:
            points = np.vstack([np.zeros((1, 2)), points])
        points.flags.writeable = False
        return points

    def coordinates(self) -> np.ndarray:
        return self._coordinates

    def node_radii(self) -> np.ndarray:
        return np.hypot(self._coordinates[:, 0], self._coordinates[:, 1])

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.node_count, dtype=bool)
        mask[self.ring_nodes(self.radial_nodes - 1)] = True
        if not self.includes_center:
            mask[self.ring_nodes(0)] = True
        return mask

    def as_rings(self, values: np.ndarray) -> np.ndarray:
        """
        Returns:
            Values of every ring except a disc center, shaped (rings, angular nodes).
        """
        offset = int(self.includes_center)
        return np.asarray(values)[offset:].reshape(-1, self.angular_nodes)

    def refined(self) -> "PolarGrid":
        return PolarGrid(
            self.r_in, self.r_out, 2 * (self.radial_nodes - 1) + 1, 2 * self.angular_nodes
        )

    @cached_property
    def triangulation(self) -> spatial.Delaunay:
        return spatial.Delaunay(self._coordinates)

    @cached_property
    def _hole(self) -> np.ndarray:
        simplices = self.triangulation.simplices
        if self.includes_center:
            return np.zeros(len(simplices), dtype=bool)
        return np.all(simplices < self.angular_nodes, axis=1)

    @property
    def _inscribed_radius(self) -> float:
        return self.r_out * np.cos(np.pi / self.angular_nodes)

    def contains(self, points: np.ndarray) -> np.ndarray:
        simplex = self.triangulation.find_simplex(points)
        found = simplex >= 0
        return found & ~self._hole[np.where(found, simplex, 0)]

    def locate(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """
        Barycentric coordinates of points in the triangulated grid.

        Args:
            points: Array of shape (k, 2) inside the grid's polygonal domain.

        Returns:
            Vertex indices and nonnegative weights, both of shape (k, 3).
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        simplex = self.triangulation.find_simplex(points)
        misplaced = (simplex < 0) | self._hole[np.where(simplex >= 0, simplex, 0)]
        if np.any(misplaced):
            # Points on the inner polygon may land in a hole simplex; move them off the edge.
            radius = np.hypot(points[misplaced, 0], points[misplaced, 1])
            nudge = 1.0 + 1e-10 * np.where(radius < self.r_out, 1.0, -1.0)
            points = points.copy()
            points[misplaced] *= nudge[:, None]
            simplex[misplaced] = self.triangulation.find_simplex(points[misplaced])
            still = (simplex < 0) | self._hole[np.where(simplex >= 0, simplex, 0)]
            if np.any(still):
                raise RejectedInput(
                    f"Invalid sample point: {points[still][0].tolist()} lies outside the grid"
                )
        transform = self.triangulation.transform[simplex]
        partial = np.einsum("kij,kj->ki", transform[:, :2, :], points - transform[:, 2, :])
        weights = np.column_stack([partial, 1.0 - partial.sum(axis=1)])
        weights = np.clip(weights, 0.0, None)
        weights /= weights.sum(axis=1, keepdims=True)
        return self.triangulation.simplices[simplex], weights

    def reach(
        self, origin: np.ndarray, direction: np.ndarray, length: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Walks from every origin along ``direction`` for ``length`` and stops at the first boundary crossing.

        Args:
            origin: Interior points, shape (k, 2).
            direction: Unit vector, shape (2,).
            length: Requested stencil lengths, shape (k,).

        Returns:
            Reached distances, and the vertices and weights interpolating the end points.
        """
        direction = np.asarray(direction, dtype=float)
        reached = np.array(length, dtype=float)
        end = origin + reached[:, None] * direction
        suspect = np.hypot(end[:, 0], end[:, 1]) > self._inscribed_radius
        closest_along = np.clip(-(origin @ direction), 0.0, reached)
        if not self.includes_center:
            closest = origin + closest_along[:, None] * direction
            suspect |= np.hypot(closest[:, 0], closest[:, 1]) < self.r_in
        rows = np.flatnonzero(suspect)
        if rows.size:
            fractions = np.arange(1, SEGMENT_SAMPLES + 1) / SEGMENT_SAMPLES
            steps = np.sort(
                np.column_stack([reached[rows, None] * fractions, closest_along[rows]]), axis=1
            )
            samples = origin[rows, None, :] + steps[..., None] * direction
            outside = ~self.contains(samples.reshape(-1, 2)).reshape(steps.shape)
            crossing = outside.any(axis=1)
            rows, steps, outside = rows[crossing], steps[crossing], outside[crossing]
            first = np.argmax(outside, axis=1)
            local = np.arange(len(rows))
            low = np.where(first > 0, steps[local, np.maximum(first - 1, 0)], 0.0)
            high = steps[local, first]
            for _ in range(BISECTION_STEPS):
                middle = 0.5 * (low + high)
                inside = self.contains(origin[rows] + middle[:, None] * direction)
                low = np.where(inside, middle, low)
                high = np.where(inside, high, middle)
            reached[rows] = low
        vertices, weights = self.locate(origin + reached[:, None] * direction)
        return reached, vertices, weights


Grid = RadialGrid | PolarGrid


@dataclass(frozen=True, eq=False)
class GridFunction:
    """
    Values on the nodes of a radial or polar grid.

    Radial grid functions stand for radial functions on R^n with n = ``dimension``;
    polar grid functions are planar.
    """

    grid: Grid
    values: np.ndarray
    dimension: int = 2

    def __post_init__(self):
        values = np.array(self.values, dtype=float).ravel()
        if values.size != self.grid.node_count:
            raise RejectedInput(
                f"Invalid value count: {values.size} (grid has {self.grid.node_count} nodes)"
            )
        if not np.all(np.isfinite(values)):
            raise RejectedInput("Invalid grid function: non-finite values")
        if isinstance(self.grid, PolarGrid) and self.dimension != 2:
            raise RejectedInput(f"Invalid dimension for a polar grid: {self.dimension}")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def from_callable(
        cls, grid: Grid, function: Callable[[np.ndarray], np.ndarray], dimension: int = 2
    ) -> "GridFunction":
        """
        Samples ``function`` on the nodes: radii for radial grids, points of shape (N, 2) for polar grids.
        """
        argument = grid.radii() if isinstance(grid, RadialGrid) else grid.coordinates()
        values = np.broadcast_to(function(argument), (grid.node_count,))
        return cls(grid, values, dimension)

    def with_values(self, values: np.ndarray) -> "GridFunction":
        return GridFunction(self.grid, values, self.dimension)

    @property
    def is_radial(self) -> bool:
        return isinstance(self.grid, RadialGrid)

    def node_points(self) -> np.ndarray:
        """
        Returns:
            Node coordinates in R^n; radial nodes are placed on the positive x₁ axis.
        """
        if isinstance(self.grid, PolarGrid):
            return self.grid.coordinates()
        points = np.zeros((self.grid.node_count, self.dimension))
        points[:, 0] = self.grid.radii()
        return points

    @cached_property
    def _radial_spline(self) -> interpolate.CubicSpline:
        return interpolate.CubicSpline(self.grid.radii(), self.values)

    @cached_property
    def _polar_spline(self) -> interpolate.RectBivariateSpline:
        grid = self.grid
        rings = grid.as_rings(self.values)
        radii = grid.radii()[1:] if grid.includes_center else grid.radii()
        pad = 3
        angles = grid.angles()
        padded_angles = np.concatenate(
            [angles[-pad:] - 2 * np.pi, angles, angles[:pad] + 2 * np.pi]
        )
        padded = np.concatenate([rings[:, -pad:], rings, rings[:, :pad]], axis=1)
        degree = min(3, len(radii) - 1)
        return interpolate.RectBivariateSpline(radii, padded_angles, padded, kx=degree, ky=3)

    def _radii_of(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if points.ndim <= 1:
            return np.atleast_1d(points)
        return np.linalg.norm(points, axis=1)

    def sample(self, points, method: str = "cubic") -> np.ndarray:
        """
        Interpolates the grid function.

        Args:
            points: Radii or points of shape (k, n) for radial grids, points of shape (k, 2) for polar grids.
            method: "cubic" (splines) or "linear" (piecewise linear on the radial grid or on the triangulation).

        Returns:
            Interpolated values, shape (k,).
        """
        if method not in ("cubic", "linear"):
            raise RejectedInput(f"Invalid interpolation method: {method}")
        if isinstance(self.grid, RadialGrid):
            radii = self._radii_of(points)
            if np.any(radii < self.grid.r_in - RING_TOLERANCE) or np.any(
                radii > self.grid.r_out * (1 + RING_TOLERANCE)
            ):
                raise RejectedInput("Invalid sample radius: outside the grid")
            if method == "linear":
                return np.interp(radii, self.grid.radii(), self.values)
            return self._radial_spline(radii)
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if method == "linear":
            vertices, weights = self.grid.locate(points)
            return np.sum(self.values[vertices] * weights, axis=1)
        radii = np.hypot(points[:, 0], points[:, 1])
        angles = np.arctan2(points[:, 1], points[:, 0]) % (2 * np.pi)
        return self._polar_spline.ev(radii, angles)

    def at_radius(self, r: float) -> float:
        if not isinstance(self.grid, RadialGrid):
            raise RejectedInput("Invalid query: at_radius needs a radial grid function")
        return float(self.sample(np.array([r]))[0])

    def interpolation_error(self, points) -> float:
        """
        Returns:
            max |cubic − linear| over the points, the recorded boundary sampling error.
        """
        if isinstance(self.grid, PolarGrid) and self.grid.includes_center:
            return 0.0
        difference = self.sample(points, "cubic") - self.sample(points, "linear")
        return float(np.max(np.abs(difference))) if difference.size else 0.0

    def sphere_points(self, r: float) -> np.ndarray:
        if isinstance(self.grid, RadialGrid):
            points = np.zeros((1, self.dimension))
            points[0, 0] = r
            return points
        angles = self.grid.angles()
        return r * np.column_stack([np.cos(angles), np.sin(angles)])

    def sphere_values(self, r: float) -> np.ndarray:
        """
        Values on the sphere of radius ``r``: the ring values when the sphere is a grid ring,
        cubic samples at the grid angles otherwise.
        """
        ring = self.grid.ring_index(r)
        if isinstance(self.grid, RadialGrid):
            if ring is not None:
                return self.values[ring : ring + 1].copy()
            return self.sample(np.array([r]))
        if ring is not None:
            return self.values[self.grid.ring_nodes(ring)].copy()
        return self.sample(self.sphere_points(r))

    def to_frame(self) -> DataFrame:
        if isinstance(self.grid, RadialGrid):
            return DataFrame({names.RADIUS: self.grid.radii(), names.VALUE: self.values})
        points = self.grid.coordinates()
        return DataFrame({names.X: points[:, 0], names.Y: points[:, 1], names.VALUE: self.values})


@dataclass(frozen=True)
class DirichletProblem:
    """
    F(D²u) = rhs in the grid's interior with u = boundary on its boundary nodes.

    ``boundary`` is a callable (receiving radii for radial grids and points of shape (k, 2) for
    polar grids), a scalar, or per-node values in the order of the grid's boundary nodes.
    """

    operator: OperatorSpec
    domain: Grid
    boundary: Callable | float | Sequence[float] | np.ndarray
    rhs: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.rhs):
            raise RejectedInput(f"Invalid right-hand side: {self.rhs}")

    @property
    def dimension(self) -> int:
        return self.operator.ellipticity.n

    def boundary_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.domain.boundary_mask())

    def boundary_values(self) -> np.ndarray:
        nodes = self.boundary_nodes()
        if callable(self.boundary):
            if isinstance(self.domain, RadialGrid):
                argument = self.domain.radii()[nodes]
            else:
                argument = self.domain.coordinates()[nodes]
            values = np.asarray(self.boundary(argument), dtype=float)
        else:
            values = np.asarray(self.boundary, dtype=float)
        try:
            values = np.broadcast_to(values, nodes.shape).astype(float)
        except ValueError as error:
            raise RejectedInput(
                f"Invalid boundary data: {values.size} values for {nodes.size} boundary nodes"
            ) from error
        if not np.all(np.isfinite(values)):
            raise RejectedInput("Invalid boundary data: non-finite values")
        return values

    def with_boundary(self, boundary) -> "DirichletProblem":
        return DirichletProblem(self.operator, self.domain, boundary, self.rhs)

    def refined(self) -> "DirichletProblem":
        if not callable(self.boundary) and np.ndim(self.boundary) > 0:
            raise RejectedInput("Invalid refinement: boundary data is given per node")
        return DirichletProblem(self.operator, self.domain.refined(), self.boundary, self.rhs)
