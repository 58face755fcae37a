from dataclasses import dataclass

import numpy as np

from farfield.errors import RejectedInput
from farfield.operators import SymMatrix

# Directions per ring of a planar evaluation cloud.
PLANAR_DIRECTIONS = 16
CLOUD_RINGS = 8


@dataclass(frozen=True, eq=False)
class Polynomial:
    """
    P(x) = constant + gradient·x + ½·xᵀ·hessian·x.
    """

    constant: float
    gradient: np.ndarray
    hessian: np.ndarray

    def __post_init__(self):
        gradient = np.array(self.gradient, dtype=float).ravel()
        hessian = np.array(self.hessian, dtype=float)
        if hessian.shape != (gradient.size, gradient.size):
            raise RejectedInput(
                f"Invalid polynomial shapes: gradient {gradient.shape}, hessian {hessian.shape}"
            )
        if not (np.isfinite(self.constant) and np.all(np.isfinite(gradient)) and np.all(np.isfinite(hessian))):
            raise RejectedInput("Invalid polynomial: non-finite coefficients")
        hessian = (hessian + hessian.T) / 2.0
        gradient.flags.writeable = False
        hessian.flags.writeable = False
        object.__setattr__(self, "constant", float(self.constant))
        object.__setattr__(self, "gradient", gradient)
        object.__setattr__(self, "hessian", hessian)

    @classmethod
    def zero(cls, n: int) -> "Polynomial":
        return cls(0.0, np.zeros(n), np.zeros((n, n)))

    @classmethod
    def linear(cls, gradient, constant: float = 0.0) -> "Polynomial":
        gradient = np.asarray(gradient, dtype=float)
        return cls(constant, gradient, np.zeros((gradient.size, gradient.size)))

    @property
    def dimension(self) -> int:
        return self.gradient.size

    @property
    def degree(self) -> int:
        if np.any(self.hessian != 0):
            return 2
        return 1 if np.any(self.gradient != 0) else 0

    def hessian_matrix(self) -> SymMatrix:
        return SymMatrix(self.hessian)

    def evaluate(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        quadratic = 0.5 * np.einsum("ki,ij,kj->k", points, self.hessian, points)
        return self.constant + points @ self.gradient + quadratic

    __call__ = evaluate

    def gradient_at(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return self.gradient + points @ self.hessian

    def with_constant(self, constant: float) -> "Polynomial":
        return Polynomial(constant, self.gradient, self.hessian)

    def __add__(self, other: "Polynomial") -> "Polynomial":
        return Polynomial(
            self.constant + other.constant, self.gradient + other.gradient, self.hessian + other.hessian
        )

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return Polynomial(
            self.constant - other.constant, self.gradient - other.gradient, self.hessian - other.hessian
        )

    def to_dict(self) -> dict:
        return {
            "constant": self.constant,
            "gradient": self.gradient.tolist(),
            "hessian": self.hessian.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Polynomial":
        return cls(data["constant"], data["gradient"], data["hessian"])


def _design(points: np.ndarray, degree: int) -> tuple[np.ndarray, list[tuple[int, int]]]:
    k, n = points.shape
    columns = [np.ones(k)] + [points[:, i] for i in range(n)]
    pairs = []
    if degree == 2:
        for i in range(n):
            for j in range(i, n):
                factor = 0.5 if i == j else 1.0
                columns.append(factor * points[:, i] * points[:, j])
                pairs.append((i, j))
    return np.column_stack(columns), pairs


def fit_polynomial(points, values, degree: int) -> Polynomial:
    """
    Least-squares polynomial of degree 1 or 2 through sampled values.

    Args:
        points: Sample points, shape (k, n).
        values: Sampled values, shape (k,).
        degree: 1 (linear) or 2 (quadratic).

    Returns:
        The fitted polynomial.
    """
    if degree not in (1, 2):
        raise RejectedInput(f"Invalid polynomial degree: {degree}")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    values = np.asarray(values, dtype=float).ravel()
    design, pairs = _design(points, degree)
    if len(values) != len(points) or len(values) < design.shape[1]:
        raise RejectedInput(
            f"Invalid fit sample: {len(values)} values for {design.shape[1]} coefficients"
        )
    coefficients, *_ = np.linalg.lstsq(design, values, rcond=None)
    n = points.shape[1]
    hessian = np.zeros((n, n))
    for (i, j), value in zip(pairs, coefficients[1 + n :]):
        hessian[i, j] = hessian[j, i] = value
    return Polynomial(coefficients[0], coefficients[1 : 1 + n], hessian)


def unit_directions(n: int) -> np.ndarray:
    """
    Returns:
        16 equally spaced directions in the plane; for n ≥ 3 the ± coordinate axes and the
        normalized (±1, …, ±1) corners.
    """
    if n == 2:
        angles = np.arange(PLANAR_DIRECTIONS) * 2 * np.pi / PLANAR_DIRECTIONS
        return np.column_stack([np.cos(angles), np.sin(angles)])
    axes = np.vstack([np.eye(n), -np.eye(n)])
    corners = np.array(np.meshgrid(*[[-1.0, 1.0]] * n)).reshape(n, -1).T / np.sqrt(n)
    return np.vstack([axes, corners])


def evaluation_cloud(n: int, radius: float, rings: int = CLOUD_RINGS) -> np.ndarray:
    """
    Fixed point cloud on the closed ball of the given radius: the center plus ``rings`` spheres
    carrying ``unit_directions(n)``. Profile fits use it as their least-squares sample.
    """
    if not radius > 0 or rings < 1:
        raise RejectedInput(f"Invalid evaluation cloud: radius {radius}, rings {rings}")
    directions = unit_directions(n)
    radii = np.linspace(radius / rings, radius, rings)
    points = (radii[:, None, None] * directions[None, :, :]).reshape(-1, n)
    return np.vstack([np.zeros((1, n)), points])
