import logging
import time

from dataclasses import dataclass, asdict, field, replace
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sparse

from polars import DataFrame
from scipy.sparse.linalg import spsolve

import farfield.names as names

from farfield.errors import RejectedConfiguration, RejectedInput, SolverNonConvergence
from farfield.grids import DirichletProblem, Grid, GridFunction, PolarGrid, RadialGrid
from farfield.operators import (
    OperatorSpec,
    frame_angle,
    frame_policies,
    radial_policies,
)
from farfield.polynomials import Polynomial

_logger = logging.getLogger(__name__)

DEFAULT_FRAMES = 8
MIN_FRAMES = 4
# Relative margin by which a new policy must beat the current one to replace it.
TIE_TOLERANCE = 1e-12
COMPARISON_SLACK = 1e-12
ROUNDOFF_FACTOR = 64.0


@dataclass(frozen=True)
class SolverOptions:
    tolerance: float = 1e-10
    max_iterations: int = 200
    damping: float = 0.5

    def __post_init__(self):
        if not self.tolerance > 0 or self.max_iterations < 1 or not 0 < self.damping <= 1:
            raise RejectedConfiguration(f"Invalid solver options: {self}")


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    residual: float
    policy_switches: int
    wall_ms: float
    damped: bool = False
    interpolation_error: float = 0.0

    def to_dict(self) -> dict:
        return {
            names.ITERATIONS: self.iterations,
            names.RESIDUAL: self.residual,
            names.POLICY_SWITCHES: self.policy_switches,
            names.WALL_MS: self.wall_ms,
            "damped": self.damped,
            "interpolation_error": self.interpolation_error,
        }


@dataclass(frozen=True, eq=False)
class _Scheme:
    """
    Discrete operator F_h(u) = sense-optimum over policies p of coefficients[p]·(B u) + constant[p],
    with one sparse basis operator B_b (interior rows, all columns) per coefficient column.
    """

    basis: tuple[sparse.csr_matrix, ...]
    coefficients: np.ndarray
    constant: np.ndarray
    sense: int
    interior: np.ndarray
    boundary: np.ndarray
    node_count: int
    scale: float = field(init=False)

    def __post_init__(self):
        diagonal = max(np.abs(b[:, self.interior].diagonal()).max(initial=0.0) for b in self.basis)
        weight = np.abs(self.coefficients).sum(axis=1).max()
        object.__setattr__(self, "scale", float(diagonal * weight))

    def policy_values(self, values: np.ndarray) -> np.ndarray:
        stacked = np.vstack([b @ values for b in self.basis])
        return self.coefficients @ stacked + self.constant[:, None]

    def evaluate(self, values: np.ndarray) -> np.ndarray:
        return self.sense * np.max(self.sense * self.policy_values(values), axis=0)


@lru_cache(maxsize=64)
def _radial_operators(grid: RadialGrid, mesh_ratio: float) -> tuple[sparse.csr_matrix, ...]:
    radii, h = grid.radii(), grid.spacing
    interior = np.flatnonzero(~grid.boundary_mask())
    rows = np.arange(len(interior))
    # Even extension through the center: u''(0) ≈ 2(u₁ − u₀)/h², and u'/r has the same limit.
    center = radii[interior] == 0
    inner = interior[~center]
    r = radii[inner]
    local = rows[~center]

    second_rows = [np.repeat(local, 3), rows[center], rows[center]]
    second_cols = [np.column_stack([inner - 1, inner, inner + 1]).ravel(), interior[center], interior[center] + 1]
    second_data = [
        np.tile([1.0, -2.0, 1.0], len(inner)) / h**2,
        np.full(center.sum(), -2.0 / h**2),
        np.full(center.sum(), 2.0 / h**2),
    ]

    central = h <= 2 * r * mesh_ratio
    first_rows = [np.repeat(local, 2), rows[center], rows[center]]
    first_cols = [
        np.where(central[:, None], np.column_stack([inner - 1, inner + 1]), np.column_stack([inner, inner + 1])).ravel(),
        interior[center],
        interior[center] + 1,
    ]
    first_data = [
        np.where(
            central[:, None],
            np.column_stack([-1.0 / (2 * h * r), 1.0 / (2 * h * r)]),
            np.column_stack([-1.0 / (h * r), 1.0 / (h * r)]),
        ).ravel(),
        np.full(center.sum(), -2.0 / h**2),
        np.full(center.sum(), 2.0 / h**2),
    ]
    shape = (len(interior), grid.node_count)
    second = sparse.csr_matrix(
        (np.concatenate(second_data), (np.concatenate(second_rows), np.concatenate(second_cols))), shape=shape
    )
    first = sparse.csr_matrix(
        (np.concatenate(first_data), (np.concatenate(first_rows), np.concatenate(first_cols))), shape=shape
    )
    return second, first


def _directional_operator(grid: PolarGrid, angle: float) -> sparse.csr_matrix:
    interior = np.flatnonzero(~grid.boundary_mask())
    points = grid.coordinates()[interior]
    radius = np.hypot(points[:, 0], points[:, 1])
    local = np.maximum(grid.radial_spacing, radius * grid.angular_spacing)
    # Stencils span about sqrt(ℓ·Δ): ℓ is the distance to the origin on annuli and the disc radius on discs,
    # where they are whole multiples of Δ. The crossing search shortens them at the boundary.
    if grid.r_in > 0:
        width = np.maximum(np.sqrt(np.maximum(radius, grid.r_in) * local), local)
    else:
        width = np.ceil(np.sqrt(grid.r_out / local)) * local
    direction = np.array([np.cos(angle), np.sin(angle)])
    forward, forward_vertices, forward_weights = grid.reach(points, direction, width)
    backward, backward_vertices, backward_weights = grid.reach(points, -direction, width)
    forward_coefficient = 2.0 / (forward * (forward + backward))
    backward_coefficient = 2.0 / (backward * (forward + backward))

    count = len(interior)
    rows = np.concatenate([np.arange(count), np.repeat(np.arange(count), 3), np.repeat(np.arange(count), 3)])
    cols = np.concatenate([interior, forward_vertices.ravel(), backward_vertices.ravel()])
    data = np.concatenate(
        [
            -(forward_coefficient + backward_coefficient),
            (forward_coefficient[:, None] * forward_weights).ravel(),
            (backward_coefficient[:, None] * backward_weights).ravel(),
        ]
    )
    return sparse.csr_matrix((data, (rows, cols)), shape=(count, grid.node_count))


@lru_cache(maxsize=32)
def _directional_operators(grid: PolarGrid, frames: int) -> tuple[sparse.csr_matrix, ...]:
    _logger.debug("Assembling %d directional stencils on %s", 2 * frames, grid)
    return tuple(_directional_operator(grid, frame_angle(d, frames)) for d in range(2 * frames))


def _scheme(problem: DirichletProblem, frames: int) -> _Scheme:
    grid = problem.domain
    mask = grid.boundary_mask()
    if isinstance(grid, RadialGrid):
        policies = radial_policies(problem.operator)
        ratio = policies.mesh_ratio()
        if grid.r_in > 0 and grid.spacing > 2 * grid.r_in * ratio * (1 + 1e-12):
            raise RejectedConfiguration(
                f"Invalid mesh: h={grid.spacing:.4g} exceeds 2·r_in·λ/((n−1)Λ) = {2 * grid.r_in * ratio:.4g}"
            )
        basis = _radial_operators(grid, ratio)
        coefficients = np.column_stack([policies.radial, policies.tangential])
    else:
        if frames < MIN_FRAMES:
            raise RejectedConfiguration(f"Invalid direction count: {frames} (at least {MIN_FRAMES})")
        policies = frame_policies(problem.operator, frames)
        basis = _directional_operators(grid, frames)
        coefficients = np.zeros((policies.count, 2 * frames))
        rows = np.arange(policies.count)
        coefficients[rows, policies.frame] = policies.first
        coefficients[rows, policies.frame + frames] = policies.second
    return _Scheme(
        basis=basis,
        coefficients=coefficients,
        constant=policies.constant,
        sense=policies.sense,
        interior=np.flatnonzero(~mask),
        boundary=np.flatnonzero(mask),
        node_count=grid.node_count,
    )


def _improve(scheme: _Scheme, values: np.ndarray, previous: np.ndarray | None) -> np.ndarray:
    candidates = scheme.sense * scheme.policy_values(values)
    best = np.argmax(candidates, axis=0)
    if previous is None:
        return best
    columns = np.arange(candidates.shape[1])
    margin = TIE_TOLERANCE * (1.0 + np.abs(candidates[best, columns]))
    keep = candidates[previous, columns] >= candidates[best, columns] - margin
    return np.where(keep, previous, best)


def _residual(scheme: _Scheme, values: np.ndarray, rhs: float) -> float:
    defect = np.abs(scheme.evaluate(values) - rhs)
    return float(defect.max(initial=0.0) / (1.0 + abs(rhs)))


def _roundoff_floor(scheme: _Scheme, values: np.ndarray, rhs: float) -> float:
    # Smallest residual F_h resolves in floating point; its stencil weights grow like 1/h².
    return float(ROUNDOFF_FACTOR * np.finfo(float).eps * scheme.scale * np.abs(values).max() / (1.0 + abs(rhs)))


def _howard(
    scheme: _Scheme, boundary_values: np.ndarray, rhs: float, options: SolverOptions
) -> tuple[np.ndarray, SolveReport]:
    start = time.perf_counter()
    values = np.empty(scheme.node_count)
    values[scheme.boundary] = boundary_values
    values[scheme.interior] = boundary_values.mean()
    inner = [b[:, scheme.interior].tocsr() for b in scheme.basis]
    fixed = np.vstack([b[:, scheme.boundary] @ boundary_values for b in scheme.basis]).T

    policy = _improve(scheme, values, None)
    seen = {policy.tobytes()}
    switches, damped, residual = 0, False, np.inf
    for iteration in range(1, options.max_iterations + 1):
        weights = scheme.coefficients[policy]
        matrix = sparse.diags(weights[:, 0]) @ inner[0]
        for b in range(1, len(inner)):
            matrix = matrix + sparse.diags(weights[:, b]) @ inner[b]
        load = rhs - scheme.constant[policy] - np.sum(weights * fixed, axis=1)
        update = np.atleast_1d(spsolve(matrix.tocsc(), load))
        if damped:
            values[scheme.interior] += options.damping * (update - values[scheme.interior])
        else:
            values[scheme.interior] = update

        residual = _residual(scheme, values, rhs)
        improved = _improve(scheme, values, policy)
        changed = int(np.count_nonzero(improved != policy))
        _logger.debug("Iteration %d: residual %.3e, %d policy switches", iteration, residual, changed)
        # Undamped iterates solve the current policy's system exactly, so a policy fixpoint is a discrete
        # solution; damped iterates only stop on the residual.
        if damped:
            converged = residual <= max(options.tolerance, _roundoff_floor(scheme, values, rhs))
        else:
            converged = changed == 0 or residual <= options.tolerance
        if converged:
            report = SolveReport(
                iterations=iteration,
                residual=residual,
                policy_switches=switches,
                wall_ms=1000 * (time.perf_counter() - start),
                damped=damped,
            )
            return values, report
        key = improved.tobytes()
        if not damped and key in seen:
            _logger.warning("Policy cycle after %d iterations; continuing with damped updates", iteration)
            damped = True
        seen.add(key)
        switches += changed
        policy = improved
    raise SolverNonConvergence("Policy iteration did not converge", options.max_iterations, residual)


def solve(
    problem: DirichletProblem, frames: int = DEFAULT_FRAMES, options: SolverOptions | None = None
) -> tuple[GridFunction, SolveReport]:
    """
    Solves a Dirichlet problem with the radial or the wide-stencil polar scheme, depending on its grid.
    """
    if isinstance(problem.domain, RadialGrid):
        return solve_radial(problem, options)
    return solve_polar(problem, frames, options)


def solve_radial(
    problem: DirichletProblem, options: SolverOptions | None = None
) -> tuple[GridFunction, SolveReport]:
    """
    Solves F(D²u) = A for radial u on a ball or an annulus.

    u'' uses the central second difference and u'/r the central first difference wherever the
    combination stays monotone, a forward difference elsewhere.

    Args:
        problem: Dirichlet problem on a ``RadialGrid`` with a rotation-invariant operator.
        options: Policy iteration settings.

    Returns:
        The discrete solution and the solve report.

    Raises:
        RejectedConfiguration: if the operator is not rotation invariant or an annulus violates
            h ≤ 2·r_in·λ/((n−1)·Λ).
        SolverNonConvergence: if policy iteration exceeds its iteration budget.
    """
    if not isinstance(problem.domain, RadialGrid):
        raise RejectedConfiguration(f"Invalid grid for the radial solver: {problem.domain}")
    options = options or SolverOptions()
    scheme = _scheme(problem, DEFAULT_FRAMES)
    values, report = _howard(scheme, problem.boundary_values(), problem.rhs, options)
    return GridFunction(problem.domain, values, problem.dimension), report


def solve_polar(
    problem: DirichletProblem, frames: int = DEFAULT_FRAMES, options: SolverOptions | None = None
) -> tuple[GridFunction, SolveReport]:
    """
    Solves F(D²u) = A in the plane with directional second differences over ``frames``
    orthogonal frames, interpolated linearly on the triangulated polar grid.

    Args:
        problem: Dirichlet problem on a ``PolarGrid`` with a planar operator.
        frames: Number of orthogonal direction pairs, at least 4.
        options: Policy iteration settings.

    Returns:
        The discrete solution and the solve report.
    """
    if not isinstance(problem.domain, PolarGrid):
        raise RejectedConfiguration(f"Invalid grid for the polar solver: {problem.domain}")
    options = options or SolverOptions()
    scheme = _scheme(problem, frames)
    values, report = _howard(scheme, problem.boundary_values(), problem.rhs, options)
    return GridFunction(problem.domain, values, 2), report


def discrete_operator(problem: DirichletProblem, values, frames: int = DEFAULT_FRAMES) -> np.ndarray:
    """
    Returns:
        F_h(u) at every interior node, in node order.
    """
    values = values.values if isinstance(values, GridFunction) else np.asarray(values, dtype=float)
    if values.size != problem.domain.node_count:
        raise RejectedInput(f"Invalid value count: {values.size}")
    return _scheme(problem, frames).evaluate(values)


@dataclass(frozen=True)
class ComparisonReport:
    passed: bool
    worst_gap: float
    nodes: int

    def to_dict(self) -> dict:
        return asdict(self)


def discrete_comparison_check(
    problem: DirichletProblem,
    lower,
    upper,
    frames: int = DEFAULT_FRAMES,
    options: SolverOptions | None = None,
) -> ComparisonReport:
    """
    Solves the problem for two ordered boundary data and compares the solutions node by node.

    Args:
        problem: Problem whose boundary data is replaced.
        lower: Boundary data f (callable, scalar or per boundary node).
        upper: Boundary data g with f ≤ g.

    Returns:
        Report with max(u_f − u_g); passes when it is at most 1e−12.
    """
    lower_values = problem.with_boundary(lower).boundary_values()
    upper_values = problem.with_boundary(upper).boundary_values()
    if np.any(lower_values > upper_values):
        raise RejectedInput(
            f"Invalid boundary pair: lower exceeds upper by {np.max(lower_values - upper_values):.3e}"
        )
    lower_solution, _ = solve(problem.with_boundary(lower_values), frames, options)
    upper_solution, _ = solve(problem.with_boundary(upper_values), frames, options)
    gap = float(np.max(lower_solution.values - upper_solution.values))
    return ComparisonReport(passed=gap <= COMPARISON_SLACK, worst_gap=gap, nodes=problem.domain.node_count)


def _spacing(grid: Grid) -> float:
    return grid.spacing if isinstance(grid, RadialGrid) else grid.radial_spacing


def convergence_study(
    problem: DirichletProblem,
    exact: Callable[[np.ndarray], np.ndarray],
    levels: int = 3,
    frames: int = DEFAULT_FRAMES,
    options: SolverOptions | None = None,
) -> DataFrame:
    """
    Solves on successively refined grids and compares with a known solution.

    Args:
        problem: Problem on the coarsest grid, with callable boundary data.
        exact: Exact solution, called like the boundary data (radii or points).
        levels: Number of grids; each halves the spacing of the previous one.
        frames: Direction pairs on the coarsest polar grid; doubled with every refinement so that
            the angular resolution of the stencils improves together with the spacing.

    Returns:
        Table with columns (level, nodes, h, sup_error, order); order is log2(e_{k−1}/e_k),
        null on the first level and whenever an error vanishes.
    """
    if levels < 2:
        raise RejectedInput(f"Invalid level count: {levels}")
    nodes, spacings, errors = [], [], []
    current = problem
    for level in range(levels):
        solution, report = solve(current, frames * 2**level, options)
        grid = current.domain
        argument = grid.radii() if isinstance(grid, RadialGrid) else grid.coordinates()
        error = float(np.max(np.abs(solution.values - exact(argument))))
        _logger.info("Level %d: %d nodes, sup error %.3e (%d iterations)", level, grid.node_count, error, report.iterations)
        nodes.append(grid.node_count)
        spacings.append(_spacing(grid))
        errors.append(error)
        if level < levels - 1:
            current = current.refined()
    orders = [None] + [
        float(np.log2(previous / error)) if previous > 0 and error > 0 else None
        for previous, error in zip(errors, errors[1:])
    ]
    return DataFrame(
        {
            names.LEVEL: list(range(levels)),
            names.NODES: nodes,
            names.SPACING: spacings,
            names.SUP_ERROR: errors,
            names.ORDER: orders,
        }
    )


@dataclass(frozen=True)
class BallOptions:
    """
    Discretization of the balls B_i: radial grids of the given spacing, or polar disc grids.
    """

    radial_spacing: float = 1.0 / 32
    radial_nodes: int = 33
    angular_nodes: int = 64
    frames: int = DEFAULT_FRAMES
    solver: SolverOptions = field(default_factory=SolverOptions)


@dataclass(frozen=True, eq=False)
class BallSolution:
    """
    Discrete solution v_i on the ball of the given radius. With a reference quadratic q the grid
    holds v_i − q, and q is added back exactly when evaluating.
    """

    radius: float
    solution: GridFunction
    report: SolveReport
    reference: Polynomial | None = None

    def _grid_values(self, points: np.ndarray) -> np.ndarray:
        if self.solution.is_radial:
            return self.solution.sample(points, "cubic")
        return self.solution.sample(points, "linear")

    def evaluate(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        values = self._grid_values(points)
        if self.reference is not None:
            values = values + self.reference.evaluate(points)
        return values

    def gradient(self, points) -> np.ndarray:
        """
        Central differences along the coordinate axes with the grid's spacing as step.

        Returns:
            Gradients, shape (k, n).
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        step = _spacing(self.solution.grid)
        gradient = np.empty_like(points)
        for axis in range(points.shape[1]):
            offset = np.zeros(points.shape[1])
            offset[axis] = step
            gradient[:, axis] = (self._grid_values(points + offset) - self._grid_values(points - offset)) / (2 * step)
        if self.reference is not None:
            gradient += self.reference.gradient_at(points)
        return gradient


def solve_ball_sequence(
    exterior: GridFunction,
    operator: OperatorSpec,
    rhs: float,
    schedule: Sequence[float],
    options: BallOptions | None = None,
    reference: Polynomial | None = None,
) -> list[BallSolution]:
    """
    Solves F(D²v_i) = A on every scheduled ball B_i with v_i = u on ∂B_i.

    Boundary values are cubic samples of the exterior data; the sampling error is recorded in each
    report. With a reference quadratic q, the balls solve G(D²ṽ) = 0 for ṽ = v_i − q with
    G(M) = F(M + D²q) − A.

    Args:
        exterior: Exterior data u on an annulus (radial or polar).
        operator: The operator F.
        rhs: The constant right-hand side A.
        schedule: Strictly increasing radii in (r_in, r_out] of the exterior grid.
        options: Ball discretization.
        reference: Optional quadratic q subtracted before solving (polar data only).

    Returns:
        One ball solution per scheduled radius.
    """
    options = options or BallOptions()
    schedule = [float(radius) for radius in schedule]
    grid = exterior.grid
    if not schedule or any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise RejectedInput(f"Invalid schedule: {schedule}")
    if schedule[0] <= grid.r_in or schedule[-1] > grid.r_out * (1 + 1e-12):
        raise RejectedInput(
            f"Invalid schedule: {schedule} leaves the exterior data's range ({grid.r_in}, {grid.r_out}]"
        )
    if exterior.dimension != operator.ellipticity.n:
        raise RejectedInput(
            f"Invalid dimension: data in R^{exterior.dimension}, operator in R^{operator.ellipticity.n}"
        )
    if reference is not None and exterior.is_radial:
        raise RejectedInput("Invalid reference: radial balls are solved without one")

    balls = []
    for radius in schedule:
        if exterior.is_radial:
            ball = RadialGrid.with_spacing(0.0, radius, options.radial_spacing)
            boundary = np.array([exterior.at_radius(radius)])
            error = exterior.interpolation_error(np.array([radius]))
            solution, report = solve_radial(DirichletProblem(operator, ball, boundary, rhs), options.solver)
        else:
            ball = PolarGrid(0.0, radius, options.radial_nodes, options.angular_nodes)
            points = ball.coordinates()[ball.boundary_mask()]
            boundary = exterior.sample(points)
            error = exterior.interpolation_error(points)
            problem = DirichletProblem(operator, ball, boundary, rhs)
            if reference is not None:
                shifted = OperatorSpec.shifted(operator, shift=rhs, offset=reference.hessian_matrix())
                problem = DirichletProblem(shifted, ball, boundary - reference.evaluate(points), 0.0)
            solution, report = solve_polar(problem, options.frames, options.solver)
        report = replace(report, interpolation_error=error)
        _logger.info(
            "Ball of radius %g solved: %d iterations, residual %.2e", radius, report.iterations, report.residual
        )
        balls.append(BallSolution(radius, solution, report, reference))
    return balls
