import logging

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict, field
from enum import Enum
from typing import Callable, Iterable, Protocol

import numpy as np
import statsmodels.api as sm

from polars import DataFrame

import farfield.names as names

from farfield.errors import RejectedConfiguration, RejectedInput
from farfield.grids import DirichletProblem, RadialGrid
from farfield.operators import (
    EllipticityTriple,
    OperatorKind,
    OperatorSpec,
    SymMatrix,
    evaluate,
    is_homogeneous,
    is_rotation_invariant,
    radial_hessian_spectrum,
    radial_policies,
)
from farfield.solver import SolverOptions, solve_radial

_logger = logging.getLogger(__name__)

# Λ/λ and n − 1 count as equal within this relative tolerance.
CASE_TOLERANCE = 1e-12
FLAG_R_SQUARED = 0.999
# The log branch wins when its residual is at most this share of the power model's.
LOG_PREFERENCE = 0.8


@dataclass(frozen=True)
class ScalingExponents:
    alpha_plus: float
    alpha_minus: float
    alpha_star: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def scaling_exponents(ellipticity: EllipticityTriple) -> ScalingExponents:
    """
    Returns:
        α+ = (n−1)λ/Λ − 1 and α− = (n−1)Λ/λ − 1.
    """
    n, lower, upper = ellipticity.n, ellipticity.lower, ellipticity.upper
    return ScalingExponents(
        alpha_plus=(n - 1) * lower / upper - 1, alpha_minus=(n - 1) * upper / lower - 1
    )


def growth_case(ellipticity: EllipticityTriple) -> int:
    """
    Compares Λ/λ with n − 1.

    Returns:
        −1 when Λ/λ > n − 1 (α+ < 0), 0 when they are equal (α+ = 0) and 1 when Λ/λ < n − 1 (α+ > 0).
    """
    ratio, threshold = ellipticity.ratio, ellipticity.n - 1
    if abs(ratio - threshold) <= CASE_TOLERANCE * threshold:
        return 0
    return 1 if ratio < threshold else -1


def case_label(ellipticity: EllipticityTriple) -> str:
    return {-1: "alpha+<0", 0: "alpha+=0", 1: "alpha+>0"}[growth_case(ellipticity)]


@dataclass(frozen=True)
class PowerLaw:
    exponent: float
    sign: int


@dataclass(frozen=True)
class Logarithmic:
    sign: int


Branch = PowerLaw | Logarithmic


class Side(str, Enum):
    PUCCI_PLUS = "pucci_plus"
    PUCCI_MINUS = "pucci_minus"


class Orientation(str, Enum):
    UPWARD = "upward"
    DOWNWARD = "downward"


class RadialProfile(Protocol):
    def evaluate(self, r) -> np.ndarray: ...

    def derivative(self, r) -> np.ndarray: ...

    def second_derivative(self, r) -> np.ndarray: ...


def _radii(r) -> np.ndarray:
    radii = np.asarray(r, dtype=float)
    if np.any(radii <= 0):
        raise RejectedInput(f"Invalid radius: {radii.min()}")
    return radii


def _branch_value(branch: Branch, r: np.ndarray, order: int) -> np.ndarray:
    match branch:
        case PowerLaw(exponent=p, sign=sign):
            factor = [1.0, p, p * (p - 1)][order]
            return sign * factor * r ** (p - order)
        case Logarithmic(sign=sign):
            return sign * [np.log(r), 1.0 / r, -1.0 / r**2][order]


def _upward_branch(side: Side, ellipticity: EllipticityTriple) -> Branch:
    n, lower, upper = ellipticity.n, ellipticity.lower, ellipticity.upper
    if side == Side.PUCCI_PLUS:
        case = growth_case(ellipticity)
        if case == 0:
            return Logarithmic(-1)
        return PowerLaw(1 - (n - 1) * lower / upper, 1 if case > 0 else -1)
    if lower == upper and n == 2:
        return Logarithmic(-1)
    return PowerLaw(1 - (n - 1) * upper / lower, 1)


def _flipped(branch: Branch) -> Branch:
    match branch:
        case PowerLaw(exponent=p, sign=sign):
            return PowerLaw(p, -sign)
        case Logarithmic(sign=sign):
            return Logarithmic(-sign)


@dataclass(frozen=True)
class FundamentalSolution:
    """
    Radial fundamental solution of a Pucci operator: E+ and E− point upward, e+ = −E− and
    e− = −E+ point downward. ``side`` names the operator the function solves.
    """

    side: Side
    orientation: Orientation
    branch: Branch
    ellipticity: EllipticityTriple

    @classmethod
    def upward(cls, side: Side, ellipticity: EllipticityTriple) -> "FundamentalSolution":
        return cls(side, Orientation.UPWARD, _upward_branch(side, ellipticity), ellipticity)

    @classmethod
    def downward(cls, side: Side, ellipticity: EllipticityTriple) -> "FundamentalSolution":
        other = Side.PUCCI_MINUS if side == Side.PUCCI_PLUS else Side.PUCCI_PLUS
        return cls(side, Orientation.DOWNWARD, _flipped(_upward_branch(other, ellipticity)), ellipticity)

    @property
    def alpha_star(self) -> float:
        """
        Scaling exponent of the tail, Φ(tx) = t^{−α*}·Φ(x); 0 on the logarithmic branch.
        """
        match self.branch:
            case PowerLaw(exponent=p):
                return -p
            case _:
                return 0.0

    def evaluate(self, r) -> np.ndarray:
        return _branch_value(self.branch, _radii(r), 0)

    __call__ = evaluate

    def derivative(self, r) -> np.ndarray:
        return _branch_value(self.branch, _radii(r), 1)

    def second_derivative(self, r) -> np.ndarray:
        return _branch_value(self.branch, _radii(r), 2)

    def operator(self) -> OperatorSpec:
        if self.side == Side.PUCCI_PLUS:
            return OperatorSpec.pucci_plus(self.ellipticity)
        return OperatorSpec.pucci_minus(self.ellipticity)

    def to_dict(self) -> dict:
        model = "log" if isinstance(self.branch, Logarithmic) else "power"
        return {
            "side": self.side.value,
            "orientation": self.orientation.value,
            "model": model,
            "alpha_star": self.alpha_star,
            **self.ellipticity.to_dict(),
        }


@dataclass(frozen=True)
class RadialFunction:
    """
    A radial candidate u(r) given by its value and first two derivatives.
    """

    value: Callable
    first: Callable
    second: Callable

    def evaluate(self, r) -> np.ndarray:
        return self.value(_radii(r))

    def derivative(self, r) -> np.ndarray:
        return self.first(_radii(r))

    def second_derivative(self, r) -> np.ndarray:
        return self.second(_radii(r))


def radial_residual(operator: OperatorSpec, profile: RadialProfile, r: float) -> float:
    """
    Evaluates F on the Hessian of a radial function at radius r.

    Raises:
        RejectedConfiguration: if F is not rotation invariant.
    """
    if not is_rotation_invariant(operator):
        raise RejectedConfiguration(
            f"Invalid radial operator: {operator.kind.value} is not rotation invariant"
        )
    spectrum = radial_hessian_spectrum(
        float(profile.derivative(r)), float(profile.second_derivative(r)), r, operator.ellipticity.n
    )
    return evaluate(operator, SymMatrix.diagonal(spectrum))


@dataclass(frozen=True)
class Normalization:
    scale: float = 1.0
    shift: float = 0.0


def normalize_upward(samples, alpha_star: float) -> Normalization:
    """
    Normalizes sampled values of Φ on the unit sphere.

    Args:
        samples: Values of Φ on ∂B₁.
        alpha_star: The scaling exponent of Φ.

    Returns:
        For α* ≠ 0 the positive scale making min(sign(α*)·Φ) = 1; for α* = 0 the shift making
        the sphere average zero.
    """
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size == 0:
        raise RejectedInput("Invalid samples: empty")
    if alpha_star == 0:
        return Normalization(shift=-float(samples.mean()))
    smallest = float(np.min(np.sign(alpha_star) * samples))
    if smallest <= 0:
        raise RejectedInput(f"Invalid samples: no positive scale exists (min {smallest})")
    return Normalization(scale=1.0 / smallest)


@dataclass(frozen=True)
class EstimatedTail:
    """
    The normalized upward tail −ln r (α* = 0) or sign(α*)·r^{−α*} for a numerically estimated exponent.
    """

    alpha_star: float

    @property
    def branch(self) -> Branch:
        if self.alpha_star == 0:
            return Logarithmic(-1)
        return PowerLaw(-self.alpha_star, int(np.sign(self.alpha_star)))

    def evaluate(self, r) -> np.ndarray:
        return _branch_value(self.branch, _radii(r), 0)

    __call__ = evaluate

    def derivative(self, r) -> np.ndarray:
        return _branch_value(self.branch, _radii(r), 1)

    def second_derivative(self, r) -> np.ndarray:
        return _branch_value(self.branch, _radii(r), 2)


Tail = FundamentalSolution | EstimatedTail


@dataclass(frozen=True)
class FundamentalPair:
    phi: Tail
    phi_tilde: Tail


def fundamental_pair(operator: OperatorSpec) -> FundamentalPair:
    """
    Closed-form upward solutions Φ of F and Φ̃ of its dual.

    Raises:
        RejectedConfiguration: for kinds without a closed form (use ``EstimatedTail``).
    """
    e = operator.ellipticity
    match operator.kind:
        case OperatorKind.PUCCI_PLUS:
            return FundamentalPair(
                FundamentalSolution.upward(Side.PUCCI_PLUS, e), FundamentalSolution.upward(Side.PUCCI_MINUS, e)
            )
        case OperatorKind.PUCCI_MINUS:
            return FundamentalPair(
                FundamentalSolution.upward(Side.PUCCI_MINUS, e), FundamentalSolution.upward(Side.PUCCI_PLUS, e)
            )
        case OperatorKind.LAPLACE:
            phi = FundamentalSolution.upward(Side.PUCCI_PLUS, EllipticityTriple(1.0, 1.0, e.n))
            return FundamentalPair(phi, phi)
        case OperatorKind.DUAL:
            base = fundamental_pair(operator.base)
            return FundamentalPair(base.phi_tilde, base.phi)
        case OperatorKind.SHIFTED if is_homogeneous(operator):
            return fundamental_pair(operator.base)
        case _:
            raise RejectedConfiguration(
                f"Invalid operator for closed-form fundamental solutions: {operator.kind.value}"
            )


@dataclass(frozen=True)
class PairSigns:
    alpha_star: int
    alpha_tilde_star: int

    @property
    def known(self) -> bool:
        """
        No operator is known whose pair has both exponents negative.
        """
        return not (self.alpha_star < 0 and self.alpha_tilde_star < 0)


def pair_signs(alpha_star: float, alpha_tilde_star: float) -> PairSigns:
    return PairSigns(int(np.sign(alpha_star)), int(np.sign(alpha_tilde_star)))


@dataclass(frozen=True)
class EstimateOptions:
    far_radii: tuple[float, ...] = (16.0, 32.0, 64.0, 128.0)
    spacing: float = 1.0 / 8
    workers: int = 1
    solver: SolverOptions = field(default_factory=SolverOptions)


@dataclass(frozen=True)
class ExponentEstimate:
    alpha_star: float
    model: str
    r_squared: float
    width: float
    flagged: bool
    exponents: ScalingExponents
    per_radius: tuple[float, ...]

    def within_bounds(self, tolerance: float = 0.02) -> bool:
        return (
            self.exponents.alpha_plus - tolerance
            <= self.alpha_star
            <= self.exponents.alpha_minus + tolerance
        )

    def to_dict(self) -> dict:
        result = asdict(self)
        result["per_radius"] = list(self.per_radius)
        return result


@dataclass(frozen=True)
class _RadiusFit:
    alpha: float
    stderr: float
    r_squared: float
    radii: np.ndarray
    values: np.ndarray


def _fit_far_radius(operator: OperatorSpec, far_radius: float, spacing: float, options: SolverOptions) -> _RadiusFit:
    grid = RadialGrid.with_spacing(1.0, far_radius, spacing)
    problem = DirichletProblem(operator, grid, np.array([1.0, 0.0]))
    solution, report = solve_radial(problem, options)
    radii = grid.radii()
    slope = np.gradient(solution.values, grid.spacing, edge_order=2)
    window = (radii >= 2.0) & (radii <= far_radius / 2) & (np.abs(slope) > 0)
    model = sm.OLS(np.log(np.abs(slope[window])), sm.add_constant(np.log(radii[window]))).fit()
    alpha = -float(model.params[1]) - 1.0
    _logger.debug("R_far=%g: alpha %.5f (R² %.6f, %d iterations)", far_radius, alpha, model.rsquared, report.iterations)
    return _RadiusFit(alpha, float(model.bse[1]), float(model.rsquared), radii[window], solution.values[window])


def _tail_model(fit: _RadiusFit, alpha: float) -> str:
    """
    Compares u = c + b·ln r against u = c + b·r^(−α) on the fit window.

    Returns:
        "log" when the log model's residual is at most 80% of the power model's, "power" otherwise.
    """
    logarithmic = sm.OLS(fit.values, sm.add_constant(np.log(fit.radii))).fit()
    power = sm.OLS(fit.values, sm.add_constant(fit.radii**-alpha, has_constant="add")).fit()
    return "log" if logarithmic.ssr <= LOG_PREFERENCE * power.ssr else "power"


def estimate_scaling_exponent(operator: OperatorSpec, options: EstimateOptions | None = None) -> ExponentEstimate:
    """
    Estimates α* of a rotation-invariant, positively homogeneous operator.

    Solves the radial problem u(1) = 1, u(R_far) = 0 for every far radius. Such solutions are
    a + b·Φ, so the log-log slope s of |u'| on [2, R_far/2] gives α = −s − 1. The last two
    estimates are extrapolated Richardson style, and the last solution decides between the log and
    the power tail.

    Args:
        operator: The operator F.
        options: Far radii, spacing cap, worker count and solver settings.

    Returns:
        The estimate with its confidence width and fit quality.
    """
    options = options or EstimateOptions()
    if not is_rotation_invariant(operator) or not is_homogeneous(operator):
        raise RejectedConfiguration(
            f"Invalid operator for exponent estimation: {operator.kind.value} must be rotation invariant and homogeneous"
        )
    if len(options.far_radii) < 2 or min(options.far_radii) <= 4:
        raise RejectedConfiguration(f"Invalid far radii: {options.far_radii}")
    bound = 2 * radial_policies(operator).mesh_ratio()
    spacing = min(0.9 * bound, options.spacing)

    def fit(radius: float) -> _RadiusFit:
        return _fit_far_radius(operator, radius, spacing, options.solver)

    if options.workers > 1:
        with ThreadPoolExecutor(max_workers=options.workers) as executor:
            fits = list(executor.map(fit, options.far_radii))
        _logger.debug("Exponent fits computed with %d workers", options.workers)
    else:
        fits = [fit(radius) for radius in options.far_radii]

    last, previous = fits[-1], fits[-2]
    alpha = 2 * last.alpha - previous.alpha
    width = max(abs(last.alpha - previous.alpha), 2 * last.stderr)
    flagged = last.r_squared < FLAG_R_SQUARED
    if flagged:
        _logger.warning("Exponent fit for %s is poor: R² = %.5f", operator.kind.value, last.r_squared)
    model = _tail_model(last, alpha)
    exponents = scaling_exponents(operator.ellipticity)
    return ExponentEstimate(
        alpha_star=alpha,
        model=model,
        r_squared=last.r_squared,
        width=width,
        flagged=flagged,
        exponents=ScalingExponents(exponents.alpha_plus, exponents.alpha_minus, alpha),
        per_radius=tuple(f.alpha for f in fits),
    )


def exponent_row(operator: OperatorSpec, estimate: ExponentEstimate) -> dict:
    return {
        names.LOWER: operator.ellipticity.lower,
        names.UPPER: operator.ellipticity.upper,
        names.DIMENSION: operator.ellipticity.n,
        names.ALPHA_PLUS: estimate.exponents.alpha_plus,
        names.ALPHA_MINUS: estimate.exponents.alpha_minus,
        names.ALPHA_STAR_HAT: estimate.alpha_star,
        names.FIT_R2: estimate.r_squared,
    }


def exponent_table(operators: Iterable[OperatorSpec], options: EstimateOptions | None = None) -> DataFrame:
    """
    Returns:
        One row per operator with its exponent bounds, the estimated α* and the fit's R².
    """
    rows = [exponent_row(operator, estimate_scaling_exponent(operator, options)) for operator in operators]
    if not rows:
        raise RejectedInput("Invalid operator list: empty")
    return DataFrame(rows)
