import logging

from dataclasses import dataclass, asdict, field
from enum import Enum

import numpy as np
import statsmodels.api as sm

from polars import DataFrame

import farfield.names as names

from farfield.errors import (
    DiagnosticFailure,
    ExtractionError,
    InconclusiveResult,
    RejectedConfiguration,
    RejectedInput,
)
from farfield.fundamental import Tail, fundamental_pair, growth_case, scaling_exponents
from farfield.grids import GridFunction, PolarGrid
from farfield.operators import (
    EllipticityTriple,
    OperatorSpec,
    SymMatrix,
    evaluate,
    is_convex,
    pucci_minus,
    pucci_plus,
)
from farfield.polynomials import Polynomial, evaluation_cloud, fit_polynomial, unit_directions
from farfield.solver import BallOptions, SolveReport, solve_ball_sequence

_logger = logging.getLogger(__name__)

LINEAR_FIT_RADIUS = 2.0
QUADRATIC_FIT_RADIUS = 4.0
# Steps whose multiplier signs decide the branch.
BRANCH_WINDOW = 3
DIVERGENCE_THRESHOLD = 1e6
GEOMETRIC_LIMIT = 0.95
STALL_TOLERANCE = 1e-12
RATIO_STABILITY = 0.05
LOG_PREFERENCE = 0.8
GROWTH_SLOPE = 0.25
NOISE_FLOOR = 10 * np.finfo(float).eps
MIN_DECAY_SPHERES = 5
MIN_FITTED_SPHERES = 3
DECADE = 8.0


@dataclass(frozen=True)
class ExtractionOptions:
    """
    Stopping rule, certificate slack and growth limits of the extraction pipelines.

    The certificate slack at radius r is ``slack`` + δ_grad·r + δ_hess·r²/2 with the last profile deltas.
    """

    tolerance: float = 1e-3
    consecutive: int = 2
    minimum_steps: int = 3
    slack: float = 1e-3
    constraint_tolerance: float = 0.05
    growth_bound: float = 10.0
    gradient_bound: float = 100.0
    balls: BallOptions = field(default_factory=BallOptions)

    def __post_init__(self):
        if not (self.tolerance > 0 and self.slack >= 0 and self.constraint_tolerance > 0):
            raise RejectedConfiguration(f"Invalid extraction tolerances: {self}")
        if self.consecutive < 1 or self.minimum_steps < 2:
            raise RejectedConfiguration(f"Invalid extraction stopping rule: {self}")


@dataclass(frozen=True)
class LinearProfile:
    gradient: np.ndarray
    constant: float

    @property
    def polynomial(self) -> Polynomial:
        return Polynomial.linear(self.gradient, self.constant)

    def to_dict(self) -> dict:
        return {"gradient": np.asarray(self.gradient).tolist(), "constant": float(self.constant)}


@dataclass(frozen=True)
class QuadraticProfile:
    hessian: SymMatrix
    gradient: np.ndarray
    constant: float
    operator_value: float

    @property
    def polynomial(self) -> Polynomial:
        return Polynomial(self.constant, self.gradient, self.hessian.entries)

    def to_dict(self) -> dict:
        return {
            "hessian": self.hessian.to_list(),
            "gradient": np.asarray(self.gradient).tolist(),
            "constant": float(self.constant),
            "operator_value": float(self.operator_value),
        }


@dataclass
class ExtractionTrace:
    """
    Per-step record of an extraction. ``upper`` holds a_i = max(v_i − u) and ``lower`` holds
    b_i = min(v_i − u) over the unit sphere; profiles are kept for both branches.
    """

    radii: list[float] = field(default_factory=list)
    upper: list[float] = field(default_factory=list)
    lower: list[float] = field(default_factory=list)
    touching: list[list[float]] = field(default_factory=list)
    touching_gradients: list[list[float]] = field(default_factory=list)
    upper_profiles: list[Polynomial] = field(default_factory=list)
    lower_profiles: list[Polynomial] = field(default_factory=list)
    gradient_deltas: list[float] = field(default_factory=list)
    hessian_deltas: list[float] = field(default_factory=list)
    reports: list[SolveReport] = field(default_factory=list)
    branch: str | None = None
    raw_constant: float | None = None
    normalization: str | None = None
    gradient_bounded: bool | None = None

    @property
    def steps(self) -> int:
        return len(self.radii)

    def to_dict(self) -> dict:
        return {
            "radii": self.radii,
            "a": self.upper,
            "b": self.lower,
            "touching": self.touching,
            "touching_gradients": self.touching_gradients,
            "profiles": [profile.to_dict() for profile in self.upper_profiles],
            "gradient_deltas": self.gradient_deltas,
            "hessian_deltas": self.hessian_deltas,
            "reports": [report.to_dict() for report in self.reports],
            "branch": self.branch,
            "raw_constant": self.raw_constant,
            "normalization": self.normalization,
            "gradient_bounded": self.gradient_bounded,
        }


@dataclass(frozen=True)
class DecayFit:
    model: str
    exponent: float | None
    amplitude: float
    r_squared: float
    window: tuple[float, float]

    @property
    def degenerate(self) -> bool:
        return self.model == "degenerate"

    def to_dict(self) -> dict:
        result = asdict(self)
        result["window"] = list(self.window)
        return result


class TailVariant(str, Enum):
    STRADDLE = "straddle"
    UP_SIM = "up_sim"
    DOWN_SIM = "down_sim"
    UP_APPROX = "up_approx"
    DOWN_APPROX = "down_approx"


@dataclass(frozen=True)
class TailClass:
    variant: TailVariant
    ratio: float | None
    u_infinity: float
    diagnostics: DataFrame

    def to_dict(self) -> dict:
        return {"variant": self.variant.value, "ratio": self.ratio, "u_infinity": _json_float(self.u_infinity)}


@dataclass(frozen=True)
class LimitEstimate:
    value: float
    mode: str
    radii: tuple[float, ...]
    means: tuple[float, ...]

    @property
    def finite(self) -> bool:
        return bool(np.isfinite(self.value))

    def to_dict(self) -> dict:
        return {"value": _json_float(self.value), "mode": self.mode, "radii": list(self.radii), "means": list(self.means)}


@dataclass(frozen=True)
class AsymptoticProfile:
    """
    An extracted polynomial with its extraction trace and the decay fit of u − P.
    """

    profile: LinearProfile | QuadraticProfile
    trace: ExtractionTrace
    decay: DecayFit | None = None

    @property
    def polynomial(self) -> Polynomial:
        return self.profile.polynomial

    def to_dict(self) -> dict:
        return {
            "profile": self.profile.to_dict(),
            "trace": self.trace.to_dict(),
            "decay": None if self.decay is None else self.decay.to_dict(),
        }


def _json_float(value: float) -> float | str:
    if np.isfinite(value):
        return float(value)
    return "inf" if value > 0 else "-inf"


def dyadic_radii(u: GridFunction) -> np.ndarray:
    """
    Returns:
        The spheres r_in·2^k (k ≥ 1) inside the data's range.
    """
    base = u.grid.r_in if u.grid.r_in > 0 else 1.0
    radii = base * 2.0 ** np.arange(1, 64)
    return radii[radii <= u.grid.r_out * (1 + 1e-12)]


def _sphere_points(u: GridFunction, r: float) -> np.ndarray:
    if isinstance(u.grid, PolarGrid):
        return u.sphere_points(r)
    return r * unit_directions(u.dimension)


def _sphere_values(u: GridFunction, r: float) -> np.ndarray:
    values = u.sphere_values(r)
    if isinstance(u.grid, PolarGrid):
        return values
    return np.full(len(unit_directions(u.dimension)), values[0])


def _sphere_deviation(u: GridFunction, profile: Polynomial, r: float) -> np.ndarray:
    return _sphere_values(u, r) - profile.evaluate(_sphere_points(u, r))


def _check_growth(u: GridFunction, degree: int, bound: float):
    points = u.node_points()
    radius = np.linalg.norm(points, axis=1)
    growth = float(np.max(np.abs(u.values) / (1.0 + radius**degree)))
    if growth > bound:
        raise RejectedInput(f"Invalid exterior data: |u|/(1 + |x|^{degree}) reaches {growth:.3g} > {bound}")


def _unit_sphere(u: GridFunction) -> tuple[np.ndarray, np.ndarray]:
    if u.grid.ring_index(1.0) is None:
        raise RejectedInput(f"Invalid exterior data: the unit sphere is not a ring of {u.grid}")
    return _sphere_points(u, 1.0), _sphere_values(u, 1.0)


def _sup_delta(current: np.ndarray, previous: np.ndarray) -> float:
    return float(np.max(np.abs(current - previous)))


def _converged(trace: ExtractionTrace, options: ExtractionOptions, with_hessian: bool) -> bool:
    if trace.steps < options.minimum_steps or len(trace.gradient_deltas) < options.consecutive:
        return False
    recent = trace.gradient_deltas[-options.consecutive :]
    if with_hessian:
        recent = recent + trace.hessian_deltas[-options.consecutive :]
    return max(recent) < options.tolerance


def _select_branch(u: GridFunction, trace: ExtractionTrace, options: ExtractionOptions) -> Polynomial:
    points = u.node_points()
    radius = np.linalg.norm(points, axis=1)
    gradient_delta = trace.gradient_deltas[-1]
    hessian_delta = trace.hessian_deltas[-1] if trace.hessian_deltas else 0.0
    epsilon = options.slack + gradient_delta * radius + hessian_delta * radius**2 / 2

    upper, lower = trace.upper_profiles[-1], trace.lower_profiles[-1]
    upper_gap = float(np.max(upper.evaluate(points) - epsilon - u.values))
    if min(trace.upper[-BRANCH_WINDOW:]) >= -options.slack and upper_gap <= 0:
        trace.branch = "max"
        return upper
    lower_gap = float(np.max(u.values - lower.evaluate(points) - epsilon))
    if max(trace.lower[-BRANCH_WINDOW:]) <= options.slack and lower_gap <= 0:
        trace.branch = "min"
        return lower
    raise DiagnosticFailure(
        "Invalid certificate: neither u ≥ P nor u ≤ Q holds within the discretization slack",
        {"upper_gap": upper_gap, "lower_gap": lower_gap, "trace": trace.to_dict()},
    )


def _normalize(u: GridFunction, profile: Polynomial, tail: Tail | None, trace: ExtractionTrace) -> Polynomial:
    trace.raw_constant = profile.constant
    radii = dyadic_radii(u)
    means = np.array([np.mean(_sphere_deviation(u, profile, r)) for r in radii])
    try:
        limit = _limit_from_means(radii, means)
    except (InconclusiveResult, RejectedInput):
        limit = None
    if limit is not None and limit.finite:
        trace.normalization = "limit"
        return profile.with_constant(profile.constant + limit.value)
    if tail is not None:
        model = sm.OLS(means, sm.add_constant(tail.evaluate(radii))).fit()
        trace.normalization = "tail"
        return profile.with_constant(profile.constant + float(model.params[0]))
    trace.normalization = "raw"
    return profile


def _default_tail(operator: OperatorSpec) -> Tail | None:
    try:
        return fundamental_pair(operator).phi
    except RejectedConfiguration:
        return None


def extract_linear_profile(
    u: GridFunction,
    operator: OperatorSpec,
    schedule,
    options: ExtractionOptions | None = None,
    tail: Tail | None = None,
) -> tuple[LinearProfile, ExtractionTrace]:
    """
    Extracts the linear polynomial P with u − P = o(|x|) from exterior data.

    Every step solves F(D²v_i) = 0 on B_i with v_i = u on ∂B_i, records a_i and b_i, and fits
    a linear polynomial to v_i − a_i (and v_i − b_i) over B_2. Once the gradients settle, the branch
    whose one-sided certificate (u ≥ P or u ≤ Q) holds is kept and the constant is normalized by
    lim(u − P), or by fitting sphere means against c + β·Φ when that limit is infinite.

    Args:
        u: Exterior data on an annulus whose inner sphere is the unit sphere.
        operator: Operator F with F(0) = 0.
        schedule: Increasing ball radii, all larger than 2.
        options: Stopping rule and slack.
        tail: Upward fundamental solution for the constant calibration; defaults to the closed form of F.

    Returns:
        The profile and the extraction trace.

    Raises:
        ExtractionError: if the schedule runs out before the gradients settle.
        DiagnosticFailure: if neither one-sided certificate holds.
    """
    options = options or ExtractionOptions()
    n = operator.ellipticity.n
    if evaluate(operator, np.zeros((n, n))) != 0:
        raise RejectedConfiguration("Invalid operator: the linear pipeline needs F(0) = 0")
    _check_growth(u, 1, options.growth_bound)
    schedule = [float(radius) for radius in schedule]
    if not schedule or schedule[0] <= LINEAR_FIT_RADIUS:
        raise RejectedInput(f"Invalid schedule: {schedule} (radii must exceed {LINEAR_FIT_RADIUS})")
    sphere, u_sphere = _unit_sphere(u)
    cloud = evaluation_cloud(n, LINEAR_FIT_RADIUS)

    trace = ExtractionTrace()
    for radius in schedule:
        (ball,) = solve_ball_sequence(u, operator, 0.0, [radius], options.balls)
        difference = ball.evaluate(sphere) - u_sphere
        a, b = float(difference.max()), float(difference.min())
        upper = fit_polynomial(cloud, ball.evaluate(cloud) - a, 1)
        trace.radii.append(radius)
        trace.upper.append(a)
        trace.lower.append(b)
        trace.touching.append(sphere[int(np.argmax(difference))].tolist())
        trace.upper_profiles.append(upper)
        trace.lower_profiles.append(upper.with_constant(upper.constant + a - b))
        trace.reports.append(ball.report)
        if trace.steps > 1:
            trace.gradient_deltas.append(_sup_delta(upper.gradient, trace.upper_profiles[-2].gradient))
        _logger.info("Linear step r=%g: a=%.4g, b=%.4g, gradient %s", radius, a, b, np.round(upper.gradient, 6))
        if _converged(trace, options, with_hessian=False):
            break
    else:
        raise ExtractionError(f"Invalid schedule: gradients did not settle below {options.tolerance}", trace)

    profile = _select_branch(u, trace, options)
    profile = _normalize(u, profile, tail if tail is not None else _default_tail(operator), trace)
    return LinearProfile(profile.gradient.copy(), profile.constant), trace


def _reference_quadratic(u: GridFunction) -> Polynomial | None:
    if not isinstance(u.grid, PolarGrid):
        return None
    points = u.node_points()
    radius = np.linalg.norm(points, axis=1)
    band = radius >= u.grid.r_out / 2
    return fit_polynomial(points[band], u.values[band], 2)


def _touching_profile(ball, sphere, cloud, values, level, index) -> tuple[Polynomial, np.ndarray]:
    touching = sphere[index]
    slope = ball.gradient(touching)[0]
    w = values - level - (cloud - touching) @ slope
    fitted = fit_polynomial(cloud, w, 2)
    return fitted + Polynomial.linear(slope, -float(slope @ touching)), slope


def extract_quadratic_profile(
    u: GridFunction,
    operator: OperatorSpec,
    rhs: float,
    schedule,
    options: ExtractionOptions | None = None,
    tail: Tail | None = None,
) -> tuple[QuadraticProfile, ExtractionTrace]:
    """
    Extracts the quadratic polynomial P with F(D²P) = A from exterior data of F(D²u) = A.

    Each step takes the touching point x_i of a_i on the unit sphere, the discrete gradient
    Dv_i(x_i), and fits a quadratic to w_i = v_i − a_i − Dv_i(x_i)·(x − x_i) over B_4. Polar data
    are solved relative to a least-squares quadratic of the outer band so the balls only carry
    the deviation.

    Args:
        u: Exterior data on an annulus whose inner sphere is the unit sphere.
        operator: Convex operator F.
        rhs: The constant A.
        schedule: Increasing ball radii, all larger than 4.
        options: Stopping rule, slack and the constraint tolerance on |F(D²P) − A|.
        tail: Optional upward tail used to calibrate the constant when lim(u − P) is infinite.

    Returns:
        The profile and the extraction trace.

    Raises:
        ExtractionError: if the schedule runs out before the profiles settle.
        DiagnosticFailure: if |F(D²P) − A| exceeds the constraint tolerance or no certificate holds.
    """
    options = options or ExtractionOptions()
    if not is_convex(operator):
        raise RejectedConfiguration(f"Invalid operator: {operator.kind.value} is not convex")
    _check_growth(u, 2, options.growth_bound)
    schedule = [float(radius) for radius in schedule]
    if not schedule or schedule[0] <= QUADRATIC_FIT_RADIUS:
        raise RejectedInput(f"Invalid schedule: {schedule} (radii must exceed {QUADRATIC_FIT_RADIUS})")
    sphere, u_sphere = _unit_sphere(u)
    cloud = evaluation_cloud(operator.ellipticity.n, QUADRATIC_FIT_RADIUS)
    reference = _reference_quadratic(u)

    trace = ExtractionTrace()
    for radius in schedule:
        (ball,) = solve_ball_sequence(u, operator, rhs, [radius], options.balls, reference)
        difference = ball.evaluate(sphere) - u_sphere
        top, bottom = int(np.argmax(difference)), int(np.argmin(difference))
        a, b = float(difference[top]), float(difference[bottom])
        values = ball.evaluate(cloud)
        upper, slope = _touching_profile(ball, sphere, cloud, values, a, top)
        lower, _ = _touching_profile(ball, sphere, cloud, values, b, bottom)
        trace.radii.append(radius)
        trace.upper.append(a)
        trace.lower.append(b)
        trace.touching.append(sphere[top].tolist())
        trace.touching_gradients.append(slope.tolist())
        trace.upper_profiles.append(upper)
        trace.lower_profiles.append(lower)
        trace.reports.append(ball.report)
        if trace.steps > 1:
            previous = trace.upper_profiles[-2]
            trace.gradient_deltas.append(_sup_delta(upper.gradient, previous.gradient))
            trace.hessian_deltas.append(_sup_delta(upper.hessian, previous.hessian))
        _logger.info("Quadratic step r=%g: a=%.4g, Hessian %s", radius, a, np.round(upper.hessian, 6).tolist())
        if _converged(trace, options, with_hessian=True):
            break
    else:
        raise ExtractionError(f"Invalid schedule: profiles did not settle below {options.tolerance}", trace)

    trace.gradient_bounded = bool(
        max(np.linalg.norm(g) for g in trace.touching_gradients) <= options.gradient_bound
    )
    profile = _select_branch(u, trace, options)
    operator_value = evaluate(operator, profile.hessian_matrix())
    if abs(operator_value - rhs) > options.constraint_tolerance:
        raise DiagnosticFailure(
            f"Invalid quadratic profile: |F(D²P) − A| = {abs(operator_value - rhs):.4g}",
            {"operator_value": operator_value, "rhs": rhs, "trace": trace.to_dict()},
        )
    profile = _normalize(u, profile, tail, trace)
    return (
        QuadraticProfile(profile.hessian_matrix(), profile.gradient.copy(), profile.constant, operator_value),
        trace,
    )


def _r_squared(model) -> float:
    if model.centered_tss <= 0:
        return 1.0 if model.ssr <= NOISE_FLOOR else 0.0
    return float(np.clip(model.rsquared, 0.0, 1.0))


def fit_decay(radii, deviations, noise_floor: float = NOISE_FLOOR) -> DecayFit:
    """
    Fits per-sphere deviations to C·r^p (power model) and to C·(ln r)^q (log model).

    The log model is selected when its residual sum of squares is at most 80% of the power model's.

    Args:
        radii: Sphere radii, at least five and spanning a factor of eight.
        deviations: Per-sphere sup |u − P|.
        noise_floor: Deviations at or below it count as zero and are left out of the fit.

    Returns:
        The selected fit; a degenerate fit without exponent when fewer than three spheres rise
        above the noise floor.
    """
    radii = np.asarray(radii, dtype=float)
    deviations = np.asarray(deviations, dtype=float)
    if radii.shape != deviations.shape or radii.size < MIN_DECAY_SPHERES:
        raise RejectedInput(f"Invalid decay sample: {radii.size} spheres (at least {MIN_DECAY_SPHERES})")
    if radii.min() <= 1 or radii.max() / radii.min() < DECADE:
        raise RejectedInput(f"Invalid decay sample: radii {radii.min():g}..{radii.max():g} span less than a factor {DECADE:g}")
    significant = np.abs(deviations) > noise_floor
    if significant.sum() < MIN_FITTED_SPHERES:
        window = (float(radii.min()), float(radii.max()))
        return DecayFit("degenerate", None, float(np.max(np.abs(deviations))), 0.0, window)
    # Spheres at the noise floor carry no decay information.
    radii, deviations = radii[significant], deviations[significant]
    window = (float(radii.min()), float(radii.max()))

    target = np.log(np.abs(deviations))
    power = sm.OLS(target, sm.add_constant(np.log(radii))).fit()
    logarithmic = sm.OLS(target, sm.add_constant(np.log(np.log(radii)))).fit()
    if logarithmic.ssr <= LOG_PREFERENCE * power.ssr and logarithmic.ssr < power.ssr:
        model, chosen = "log", logarithmic
    else:
        model, chosen = "power", power
    return DecayFit(
        model=model,
        exponent=float(chosen.params[1]),
        amplitude=float(np.exp(chosen.params[0])),
        r_squared=_r_squared(chosen),
        window=window,
    )


def _limit_from_means(radii: np.ndarray, means: np.ndarray) -> LimitEstimate:
    if len(means) < 3:
        raise RejectedInput(f"Invalid sphere sequence: {len(means)} spheres (at least 3)")
    record = (tuple(float(r) for r in radii), tuple(float(m) for m in means))
    increments = np.diff(means)
    scale = 1.0 + np.max(np.abs(means))
    if np.all(np.abs(increments) <= STALL_TOLERANCE * scale):
        return LimitEstimate(float(means[-1]), "converged", *record)
    monotone = np.all(increments > 0) or np.all(increments < 0)
    if monotone and abs(means[-1]) > DIVERGENCE_THRESHOLD:
        return LimitEstimate(float(np.sign(increments[-1]) * np.inf), "diverged", *record)
    if monotone:
        ratios = increments[1:] / increments[:-1]
        recent = ratios[-2:]
        if np.all((recent > 0) & (recent < GEOMETRIC_LIMIT)):
            q = float(recent[-1])
            return LimitEstimate(float(means[-1] + increments[-1] * q / (1 - q)), "extrapolated", *record)
        if np.all(recent >= GEOMETRIC_LIMIT):
            return LimitEstimate(float(np.sign(increments[-1]) * np.inf), "diverged", *record)
    raise InconclusiveResult(
        "Inconclusive limit: sphere means neither settle nor diverge monotonically",
        DataFrame({names.RADIUS: radii, names.SPHERE_MEAN: means}),
    )


def estimate_limit_at_infinity(u: GridFunction, radii=None) -> LimitEstimate:
    """
    Extrapolates the sphere means of u on a dyadic sequence of spheres.

    Means that stop changing give their last value; geometrically shrinking increments are summed
    out; monotone means whose increments do not shrink, or that pass 10⁶ in magnitude, diverge to ±∞.

    Raises:
        InconclusiveResult: if the means oscillate without settling.
    """
    radii = dyadic_radii(u) if radii is None else np.asarray(radii, dtype=float)
    means = np.array([np.mean(_sphere_values(u, r)) for r in radii])
    return _limit_from_means(radii, means)


def _stable_ratio(radii: np.ndarray, ratios: np.ndarray) -> float | None:
    window = radii >= radii[-1] / DECADE
    recent = ratios[window]
    if not np.all(np.isfinite(recent)) or np.any(recent <= 0):
        return None
    if recent.max() / recent.min() - 1 > RATIO_STABILITY:
        return None
    return float(recent[-1])


def classify_tail(
    u: GridFunction, profile: Polynomial, phi: Tail, phi_tilde: Tail, radii=None
) -> TailClass:
    """
    Decides which of the five alternatives the tail u − P follows on the tested spheres.

    Straddle is checked first: min over the sphere ≤ u∞ ≤ max over the sphere on every tested
    sphere. Otherwise the per-sphere ratios of (u − P − u∞) against Φ and −Φ̃ (of u − P when u∞
    is infinite) must stay positive and within 5% over the outer dyadic decade.

    Args:
        u: Exterior data.
        profile: The extracted polynomial P.
        phi: Upward fundamental solution of F.
        phi_tilde: Upward fundamental solution of the dual operator.
        radii: Tested spheres; dyadic by default.

    Returns:
        The tail class with the per-sphere diagnostics.

    Raises:
        InconclusiveResult: if no alternative fits on the tested spheres.
    """
    radii = dyadic_radii(u) if radii is None else np.asarray(radii, dtype=float)
    deviations = [_sphere_deviation(u, profile, r) for r in radii]
    means = np.array([d.mean() for d in deviations])
    lows = np.array([d.min() for d in deviations])
    highs = np.array([d.max() for d in deviations])
    try:
        u_infinity = _limit_from_means(radii, means).value
    except InconclusiveResult:
        u_infinity = np.nan

    finite = bool(np.isfinite(u_infinity))
    shifted = means - u_infinity if finite else means
    ratio_phi = shifted / phi.evaluate(radii)
    ratio_phi_tilde = shifted / -phi_tilde.evaluate(radii)
    diagnostics = DataFrame(
        {
            names.RADIUS: radii,
            names.SPHERE_MEAN: means,
            names.SPHERE_MIN: lows,
            names.SPHERE_MAX: highs,
            names.RATIO_PHI: ratio_phi,
            names.RATIO_PHI_TILDE: ratio_phi_tilde,
        }
    )
    if finite:
        margin = STALL_TOLERANCE * (1.0 + np.max(np.abs(means)))
        if np.all((lows <= u_infinity + margin) & (u_infinity - margin <= highs)):
            return TailClass(TailVariant.STRADDLE, None, u_infinity, diagnostics)
    if np.isnan(u_infinity):
        raise InconclusiveResult("Inconclusive tail: no limit at infinity", diagnostics)

    up = _stable_ratio(radii, ratio_phi)
    if up is not None:
        return TailClass(TailVariant.UP_SIM if finite else TailVariant.UP_APPROX, up, u_infinity, diagnostics)
    down = _stable_ratio(radii, ratio_phi_tilde)
    if down is not None:
        return TailClass(TailVariant.DOWN_SIM if finite else TailVariant.DOWN_APPROX, down, u_infinity, diagnostics)
    raise InconclusiveResult("Inconclusive tail: no ratio settles over the outer decade", diagnostics)


@dataclass(frozen=True)
class _SphereSample:
    radius: float
    deviation: np.ndarray
    gradient: np.ndarray
    hessian: np.ndarray


def _polar_derivatives(u: GridFunction, profile: Polynomial) -> dict[str, np.ndarray]:
    grid = u.grid
    rings = grid.as_rings(u.values - profile.evaluate(grid.coordinates()))
    radii = grid.radii()[1:] if grid.includes_center else grid.radii()
    step = grid.angular_spacing
    d_r = np.gradient(rings, radii, axis=0, edge_order=2)
    d_rr = np.gradient(d_r, radii, axis=0, edge_order=2)
    d_t = (np.roll(rings, -1, axis=1) - np.roll(rings, 1, axis=1)) / (2 * step)
    d_tt = (np.roll(rings, -1, axis=1) - 2 * rings + np.roll(rings, 1, axis=1)) / step**2
    d_rt = np.gradient(d_t, radii, axis=0, edge_order=2)
    return {"d": rings, "d_r": d_r, "d_rr": d_rr, "d_t": d_t, "d_tt": d_tt, "d_rt": d_rt}


def _sphere_samples(u: GridFunction, profile: Polynomial, radii) -> list[_SphereSample]:
    samples = []
    if isinstance(u.grid, PolarGrid):
        parts = _polar_derivatives(u, profile)
        offset = int(u.grid.includes_center)
        for r in radii:
            ring = u.grid.ring_index(r)
            if ring is None:
                raise RejectedInput(f"Invalid sphere radius: {r} is not a grid ring")
            d, d_r, d_rr, d_t, d_tt, d_rt = (parts[key][ring - offset] for key in ("d", "d_r", "d_rr", "d_t", "d_tt", "d_rt"))
            # Gradient norm and Hessian spectrum are frame invariant, so the polar frame suffices.
            gradient = np.hypot(d_r, d_t / r)
            mixed = d_rt / r - d_t / r**2
            hessian = np.stack(
                [np.stack([d_rr, mixed], axis=-1), np.stack([mixed, d_tt / r**2 + d_r / r], axis=-1)], axis=-2
            )
            samples.append(_SphereSample(float(r), d, gradient, hessian))
        return samples

    grid_radii = u.grid.radii()
    first = np.gradient(u.values, grid_radii, edge_order=2)
    second = np.gradient(first, grid_radii, edge_order=2)
    directions = unit_directions(u.dimension)
    projector = np.einsum("ki,kj->kij", directions, directions)
    identity = np.eye(u.dimension)
    for r in radii:
        ring = u.grid.ring_index(r)
        if ring is None:
            raise RejectedInput(f"Invalid sphere radius: {r} is not a grid node")
        points = r * directions
        deviation = u.values[ring] - profile.evaluate(points)
        gradient = np.linalg.norm(first[ring] * directions - profile.gradient_at(points), axis=1)
        hessian = second[ring] * projector + first[ring] / r * (identity - projector) - profile.hessian
        samples.append(_SphereSample(float(r), deviation, gradient, hessian))
    return samples


def _envelope(ellipticity: EllipticityTriple, radii: np.ndarray) -> np.ndarray:
    if growth_case(ellipticity) == 0:
        return np.log(radii)
    return radii ** (-scaling_exponents(ellipticity).alpha_plus)


def _growth_slope(radii: np.ndarray, ratios: np.ndarray) -> float:
    window = (radii >= radii[-1] / DECADE) & (ratios > NOISE_FLOOR)
    if window.sum() < 3:
        return 0.0
    model = sm.OLS(np.log(ratios[window]), sm.add_constant(np.log(radii[window]))).fit()
    return float(model.params[1])


@dataclass(frozen=True)
class BoundReport:
    constants: dict[int, float]
    slopes: dict[int, float]
    table: DataFrame

    @property
    def passed(self) -> bool:
        return all(slope <= GROWTH_SLOPE for slope in self.slopes.values())

    def to_dict(self) -> dict:
        return {
            "constants": {str(order): value for order, value in self.constants.items()},
            "slopes": {str(order): value for order, value in self.slopes.items()},
            "passed": self.passed,
        }


def verify_decay_bounds(
    u: GridFunction,
    profile: Polynomial,
    ellipticity: EllipticityTriple,
    orders: tuple[int, ...] = (0, 1),
    radii=None,
) -> BoundReport:
    """
    Compares |u − P|, |Du − DP| and |D²u − D²P| with the envelope of the growth case
    (|E+|, ln r or r^{−α+}) divided by r and r².

    Spheres where the envelope vanishes are skipped. The empirical constant of each order is the
    largest ratio over the tested spheres; a growth trend is an outer-decade log-log slope of the
    ratios above 0.25.

    Args:
        u: Exterior data.
        profile: The extracted polynomial P.
        ellipticity: The triple deciding the growth case.
        orders: Derivative orders to check (0, 1, 2).
        radii: Tested spheres; dyadic by default.

    Returns:
        Report with constants, growth slopes and the per-sphere table.
    """
    if not orders or not set(orders) <= {0, 1, 2}:
        raise RejectedInput(f"Invalid bound orders: {orders}")
    radii = dyadic_radii(u) if radii is None else np.asarray(radii, dtype=float)
    envelope = _envelope(ellipticity, radii)
    keep = envelope > 0
    radii, envelope = radii[keep], envelope[keep]
    if len(radii) < 2:
        raise RejectedInput("Invalid sphere sequence: fewer than two spheres with a positive envelope")
    samples = _sphere_samples(u, profile, radii)
    sups = {
        0: np.array([np.max(np.abs(s.deviation)) for s in samples]),
        1: np.array([np.max(s.gradient) for s in samples]),
        2: np.array([np.max(np.abs(np.linalg.eigvalsh(s.hessian))) for s in samples]),
    }
    columns = {
        names.RADIUS: radii,
        names.SUP_DEVIATION: sups[0],
        names.GRAD_DEVIATION: sups[1],
        names.HESS_DEVIATION: sups[2],
    }
    constants, slopes = {}, {}
    for order in sorted(orders):
        bound = envelope / radii**order
        ratios = sups[order] / bound
        columns[names.envelope_column(order)] = bound
        columns[names.ratio_column(order)] = ratios
        constants[order] = float(np.max(ratios))
        slopes[order] = _growth_slope(radii, ratios)
    report = BoundReport(constants, slopes, DataFrame(columns))
    if not report.passed:
        _logger.warning("Decay bound ratios grow: slopes %s", slopes)
    return report


def sphere_statistics(
    u: GridFunction,
    profile: Polynomial,
    ellipticity: EllipticityTriple,
    phi: Tail,
    phi_tilde: Tail,
    u_infinity: float = 0.0,
    radii=None,
) -> DataFrame:
    """
    Returns:
        Per-sphere table (r, sup_dev, grad_dev, hess_dev, envelope, ratio_phi, ratio_phi_tilde).
    """
    radii = dyadic_radii(u) if radii is None else np.asarray(radii, dtype=float)
    samples = _sphere_samples(u, profile, radii)
    means = np.array([s.deviation.mean() for s in samples])
    shifted = means - u_infinity if np.isfinite(u_infinity) else means
    return DataFrame(
        {
            names.RADIUS: radii,
            names.SUP_DEVIATION: [float(np.max(np.abs(s.deviation))) for s in samples],
            names.GRAD_DEVIATION: [float(np.max(s.gradient)) for s in samples],
            names.HESS_DEVIATION: [float(np.max(np.abs(np.linalg.eigvalsh(s.hessian)))) for s in samples],
            names.ENVELOPE: _envelope(ellipticity, radii),
            names.RATIO_PHI: shifted / phi.evaluate(radii),
            names.RATIO_PHI_TILDE: shifted / -phi_tilde.evaluate(radii),
        }
    )


def harnack_ratio(u: GridFunction, radii=None) -> DataFrame:
    """
    Per-sphere max/min of a positive function.

    Returns:
        Table (r, max, min, harnack_ratio).

    Raises:
        RejectedInput: if u is not positive on a tested sphere.
    """
    radii = dyadic_radii(u) if radii is None else np.asarray(radii, dtype=float)
    values = [_sphere_values(u, r) for r in radii]
    lows = np.array([v.min() for v in values])
    if np.any(lows <= 0):
        raise RejectedInput(f"Invalid Harnack sample: non-positive value {lows.min():.3g}")
    highs = np.array([v.max() for v in values])
    return DataFrame(
        {names.RADIUS: radii, names.SPHERE_MAX: highs, names.SPHERE_MIN: lows, names.HARNACK_RATIO: highs / lows}
    )


def pucci_class_residuals(
    u: GridFunction, profile: Polynomial, ellipticity: EllipticityTriple, radii=None
) -> DataFrame:
    """
    Per-sphere sup of M+(D²v)⁻ and M−(D²v)⁺ for v = u − P; both vanish when v lies in S(λ, Λ, 0).
    """
    if u.dimension != ellipticity.n:
        raise RejectedInput(f"Invalid dimension: {u.dimension} (expected {ellipticity.n})")
    radii = dyadic_radii(u) if radii is None else np.asarray(radii, dtype=float)
    plus_defects, minus_defects = [], []
    for sample in _sphere_samples(u, profile, radii):
        matrices = [SymMatrix.symmetrized(h) for h in sample.hessian]
        plus_defects.append(max(max(0.0, -pucci_plus(m, ellipticity)) for m in matrices))
        minus_defects.append(max(max(0.0, pucci_minus(m, ellipticity)) for m in matrices))
    return DataFrame(
        {names.RADIUS: radii, names.PUCCI_PLUS_DEFECT: plus_defects, names.PUCCI_MINUS_DEFECT: minus_defects}
    )


def approx_offset_bound(u: GridFunction, profile: Polynomial, phi: Tail, ratio: float, radii=None) -> DataFrame:
    """
    Per-sphere sup |u − P − a·Φ|; bounded offsets confirm an ≈-type tail with limit a.
    """
    radii = dyadic_radii(u) if radii is None else np.asarray(radii, dtype=float)
    offsets = [
        float(np.max(np.abs(_sphere_deviation(u, profile, r) - ratio * phi.evaluate(np.array([r]))[0])))
        for r in radii
    ]
    return DataFrame({names.RADIUS: radii, names.OFFSET: offsets})
