import numpy as np
import pytest

import farfield.names as names

from farfield.errors import RejectedInput
from farfield.grids import DirichletProblem, GridFunction, PolarGrid, RadialGrid
from farfield.operators import OperatorSpec

DISC = PolarGrid(0.0, 1.0, 5, 16)
ANNULUS = PolarGrid(1.0, 2.0, 9, 64)
SHELL = RadialGrid(1.0, 3.0, 9)
LAPLACE = OperatorSpec.laplace(2)

INTERIOR_POINTS = np.array([[0.1, 0.2], [-0.5, 0.3], [0.0, -0.85], [0.6, -0.6], [0.0, 0.0]])
ANNULUS_POINTS = np.array([[1.05, 0.0], [0.0, -1.5], [1.2, 1.2], [-1.9, 0.05], [np.cos(0.05), np.sin(0.05)]])


def affine(points):
    return 2.0 * points[:, 0] - points[:, 1] + 1.0


def test_radial_grid():
    grid = RadialGrid.with_spacing(0.0, 2.0, 0.25)
    assert grid.nodes == 9
    assert grid.spacing == 0.25
    assert grid.includes_center
    assert tuple(grid.boundary_mask()) == (False,) * 8 + (True,)
    assert tuple(SHELL.boundary_mask()) == (True,) + (False,) * 7 + (True,)
    assert SHELL.refined().nodes == 17


@pytest.mark.parametrize("arguments", [(1.0, 1.0, 5), (-1.0, 1.0, 5), (0.0, 1.0, 2), (0.0, np.inf, 5)])
def test_radial_grid_rejects(arguments):
    with pytest.raises(RejectedInput):
        RadialGrid(*arguments)


def test_ring_index():
    assert SHELL.ring_index(1.5) == 2
    assert SHELL.ring_index(3.0) == 8
    assert SHELL.ring_index(1.3) is None
    assert SHELL.ring_index(3.5) is None
    assert ANNULUS.ring_index(1.5) == 4


def test_polar_grid_layout():
    assert DISC.node_count == 1 + 4 * 16
    assert ANNULUS.node_count == 9 * 64
    assert tuple(DISC.ring_nodes(0)) == (0,)
    assert tuple(DISC.ring_nodes(1)) == tuple(range(1, 17))
    assert DISC.boundary_mask().sum() == 16
    assert ANNULUS.boundary_mask().sum() == 128
    assert tuple(DISC.coordinates()[1]) == pytest.approx((0.25, 0.0))
    assert DISC.node_radii().max() == pytest.approx(1.0)
    assert ANNULUS.as_rings(np.arange(ANNULUS.node_count)).shape == (9, 64)
    assert DISC.refined().node_count == 1 + 8 * 32
    with pytest.raises(ValueError):
        DISC.coordinates()[0, 0] = 1.0


@pytest.mark.parametrize("angular_nodes", [6, 9])
def test_polar_grid_rejects(angular_nodes):
    with pytest.raises(RejectedInput):
        PolarGrid(0.0, 1.0, 5, angular_nodes)


def test_contains():
    inside = ANNULUS.contains(np.array([[0.0, 0.0], [1.5, 0.0], [3.0, 0.0], [0.0, 0.5]]))
    assert tuple(inside) == (False, True, False, False)


@pytest.mark.parametrize("grid, points", [(DISC, INTERIOR_POINTS), (ANNULUS, ANNULUS_POINTS)])
def test_linear_sampling_is_exact_on_affine_data(grid, points):
    u = GridFunction.from_callable(grid, affine)
    assert u.sample(points, "linear") == pytest.approx(affine(points), abs=1e-12)
    vertices, weights = grid.locate(points)
    assert vertices.shape == weights.shape == (len(points), 3)
    assert np.all(weights >= 0)
    assert weights.sum(axis=1) == pytest.approx(np.ones(len(points)))


def test_locate_rejects_outside_points():
    with pytest.raises(RejectedInput):
        ANNULUS.locate(np.array([[0.2, 0.1]]))


def test_reach_stops_at_the_boundary():
    origins = np.array([[0.0, 0.0], [0.5, 0.0], [0.0, 0.0]])
    reached, vertices, weights = DISC.reach(origins, np.array([1.0, 0.0]), np.array([2.0, 2.0, 0.5]))
    assert tuple(reached) == pytest.approx((1.0, 0.5, 0.5), abs=1e-9)
    u = GridFunction.from_callable(DISC, affine)
    ends = np.sum(u.values[vertices] * weights, axis=1)
    assert tuple(ends) == pytest.approx((3.0, 3.0, 2.0), abs=1e-8)


def test_reach_stops_at_the_hole():
    reached, _, _ = ANNULUS.reach(np.array([[1.5, 0.0]]), np.array([-1.0, 0.0]), np.array([1.0]))
    assert reached[0] == pytest.approx(0.5, abs=1e-9)


def test_grid_function_rejects():
    with pytest.raises(RejectedInput):
        GridFunction(SHELL, np.zeros(3))
    with pytest.raises(RejectedInput):
        GridFunction(SHELL, np.full(9, np.nan))
    with pytest.raises(RejectedInput):
        GridFunction(DISC, np.zeros(DISC.node_count), dimension=3)


def test_radial_sampling():
    u = GridFunction.from_callable(SHELL, lambda r: r**3 - r, dimension=3)
    assert u.at_radius(1.7) == pytest.approx(1.7**3 - 1.7, abs=1e-12)
    assert u.sample(np.array([[0.0, 1.7, 0.0]]))[0] == pytest.approx(1.7**3 - 1.7, abs=1e-12)
    assert u.sample(np.array([2.0]), "linear")[0] == pytest.approx(6.0)
    assert tuple(u.node_points()[2]) == (1.5, 0.0, 0.0)
    assert u.is_radial
    with pytest.raises(RejectedInput):
        u.sample(np.array([3.5]))
    with pytest.raises(RejectedInput):
        u.sample(np.array([2.0]), "quintic")
    with pytest.raises(ValueError):
        u.values[0] = 1.0


def test_polar_sampling():
    u = GridFunction.from_callable(ANNULUS, lambda points: points[:, 0])
    point = np.array([[1.3 * np.cos(0.4), 1.3 * np.sin(0.4)]])
    assert u.sample(point)[0] == pytest.approx(point[0, 0], abs=1e-4)
    assert u.interpolation_error(point) <= 1e-2
    assert GridFunction.from_callable(DISC, affine).interpolation_error(INTERIOR_POINTS) == 0.0
    with pytest.raises(RejectedInput):
        u.at_radius(1.5)


def test_sphere_values():
    u = GridFunction.from_callable(ANNULUS, lambda points: np.hypot(points[:, 0], points[:, 1]))
    assert u.sphere_values(1.5) == pytest.approx(np.full(64, 1.5))
    assert u.sphere_points(1.5).shape == (64, 2)
    assert u.sphere_values(1.3) == pytest.approx(np.full(64, 1.3), abs=1e-6)
    radial = GridFunction.from_callable(SHELL, lambda r: 2 * r)
    assert tuple(radial.sphere_values(2.0)) == (4.0,)


def test_to_frame():
    assert GridFunction.from_callable(SHELL, lambda r: r).to_frame().columns == [names.RADIUS, names.VALUE]
    frame = GridFunction.from_callable(DISC, affine).to_frame()
    assert frame.columns == [names.X, names.Y, names.VALUE]
    assert frame.height == DISC.node_count


def test_dirichlet_boundary_values():
    problem = DirichletProblem(LAPLACE, SHELL, lambda r: r**2)
    assert tuple(problem.boundary_nodes()) == (0, 8)
    assert tuple(problem.boundary_values()) == (1.0, 9.0)
    assert tuple(problem.with_boundary(2.0).boundary_values()) == (2.0, 2.0)
    assert problem.dimension == 2
    disc = DirichletProblem(LAPLACE, DISC, affine)
    assert disc.boundary_values() == pytest.approx(affine(DISC.coordinates()[DISC.boundary_mask()]))
    assert disc.refined().domain == DISC.refined()


def test_dirichlet_rejects():
    with pytest.raises(RejectedInput):
        DirichletProblem(LAPLACE, SHELL, 0.0, rhs=np.nan)
    with pytest.raises(RejectedInput):
        DirichletProblem(LAPLACE, SHELL, [1.0, 2.0, 3.0]).boundary_values()
    with pytest.raises(RejectedInput):
        DirichletProblem(LAPLACE, SHELL, [1.0, np.inf]).boundary_values()
    with pytest.raises(RejectedInput):
        DirichletProblem(LAPLACE, SHELL, [1.0, 2.0]).refined()
