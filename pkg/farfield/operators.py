import itertools
import logging

from dataclasses import dataclass, asdict
from enum import Enum
from typing import Iterable

import numpy as np

from scipy import linalg

from farfield.errors import RejectedConfiguration, RejectedInput

_logger = logging.getLogger(__name__)

# Eigenvalues this close to zero contribute nothing to the Pucci sums.
ZERO_EIGENVALUE = 1e-12
SANDWICH_TOLERANCE = 1e-10
HOMOGENEITY_TOLERANCE = 1e-12
ISOTROPY_TOLERANCE = 1e-12

MAX = 1
MIN = -1


@dataclass(frozen=True)
class EllipticityTriple:
    lower: float
    upper: float
    n: int

    def __post_init__(self):
        valid_bounds = 0 < self.lower <= self.upper < np.inf
        if not valid_bounds or int(self.n) != self.n or self.n < 2:
            raise RejectedInput(
                f"Invalid ellipticity triple: {(self.lower, self.upper, self.n)}"
            )

    @property
    def ratio(self) -> float:
        return self.upper / self.lower

    def to_dict(self) -> dict:
        return {"lambda": self.lower, "Lambda": self.upper, "n": int(self.n)}


class SymMatrix:
    """
    Read-only real symmetric matrix. Symmetry is checked entry by entry without tolerance.
    """

    __slots__ = ("_entries",)

    def __init__(self, entries):
        array = np.array(entries, dtype=float)
        if array.ndim != 2 or array.shape[0] != array.shape[1] or array.shape[0] < 1:
            raise RejectedInput(f"Invalid matrix shape: {array.shape}")
        if not np.all(np.isfinite(array)):
            raise RejectedInput("Invalid matrix: non-finite entries")
        if not np.array_equal(array, array.T):
            raise RejectedInput("Invalid matrix: entries are not symmetric")
        array.flags.writeable = False
        self._entries = array

    @classmethod
    def coerce(cls, matrix) -> "SymMatrix":
        return matrix if isinstance(matrix, SymMatrix) else cls(matrix)

    @classmethod
    def symmetrized(cls, matrix) -> "SymMatrix":
        array = np.asarray(matrix, dtype=float)
        return cls((array + array.T) / 2.0)

    @classmethod
    def identity(cls, n: int) -> "SymMatrix":
        return cls(np.eye(n))

    @classmethod
    def zeros(cls, n: int) -> "SymMatrix":
        return cls(np.zeros((n, n)))

    @classmethod
    def diagonal(cls, values) -> "SymMatrix":
        return cls(np.diag(np.asarray(values, dtype=float)))

    @property
    def entries(self) -> np.ndarray:
        return self._entries

    @property
    def order(self) -> int:
        return self._entries.shape[0]

    def eigenvalues(self) -> np.ndarray:
        """
        Returns:
            The real spectrum in ascending order.
        """
        return linalg.eigh(self._entries, eigvals_only=True)

    def trace(self) -> float:
        return float(np.trace(self._entries))

    def is_isotropic(self, tolerance: float = ISOTROPY_TOLERANCE) -> bool:
        level = self.trace() / self.order
        deviation = np.abs(self._entries - level * np.eye(self.order)).max()
        return bool(deviation <= tolerance * (1.0 + abs(level)))

    def to_list(self) -> list[list[float]]:
        return self._entries.tolist()

    def __add__(self, other: "SymMatrix") -> "SymMatrix":
        return SymMatrix(self._entries + SymMatrix.coerce(other).entries)

    def __sub__(self, other: "SymMatrix") -> "SymMatrix":
        return SymMatrix(self._entries - SymMatrix.coerce(other).entries)

    def __neg__(self) -> "SymMatrix":
        return SymMatrix(-self._entries)

    def __mul__(self, scalar: float) -> "SymMatrix":
        return SymMatrix(float(scalar) * self._entries)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"SymMatrix({self.to_list()})"


class OperatorKind(str, Enum):
    PUCCI_PLUS = "pucci_plus"
    PUCCI_MINUS = "pucci_minus"
    LAPLACE = "laplace"
    BELLMAN = "bellman"
    SHIFTED = "shifted"
    DUAL = "dual"


@dataclass(frozen=True)
class OperatorSpec:
    """
    A fully nonlinear operator F(D²u) of one of the supported kinds.

    ``controls`` and ``orbit`` belong to Bellman operators: with ``orbit`` set, every control acts
    through all rotations, so F(M) = max_k sum_j a_kj·μ_j with both spectra sorted. ``shift`` and
    ``offset`` belong to Shifted operators, G(M) = base(M + offset) − shift. Shifted and Dual
    operators wrap ``base``.
    """

    kind: OperatorKind
    ellipticity: EllipticityTriple
    controls: tuple[SymMatrix, ...] = ()
    orbit: bool = False
    shift: float = 0.0
    offset: SymMatrix | None = None
    base: "OperatorSpec | None" = None

    def __post_init__(self):
        n = self.ellipticity.n
        match self.kind:
            case OperatorKind.BELLMAN:
                if not self.controls:
                    raise RejectedConfiguration(
                        "Invalid Bellman operator: empty control list"
                    )
                orders = {control.order for control in self.controls}
                if orders != {n}:
                    raise RejectedConfiguration(
                        f"Invalid Bellman controls: orders {sorted(orders)} for n={n}"
                    )
            case OperatorKind.SHIFTED | OperatorKind.DUAL:
                if self.base is None:
                    raise RejectedConfiguration(f"Invalid {self.kind.value} operator: no base")
                if self.base.ellipticity != self.ellipticity:
                    raise RejectedConfiguration(
                        f"Invalid {self.kind.value} operator: ellipticity differs from base"
                    )
                if self.offset is not None and self.offset.order != n:
                    raise RejectedConfiguration(
                        f"Invalid offset order: {self.offset.order} for n={n}"
                    )
            case _:
                pass

    @classmethod
    def pucci_plus(cls, ellipticity: EllipticityTriple) -> "OperatorSpec":
        return cls(kind=OperatorKind.PUCCI_PLUS, ellipticity=ellipticity)

    @classmethod
    def pucci_minus(cls, ellipticity: EllipticityTriple) -> "OperatorSpec":
        return cls(kind=OperatorKind.PUCCI_MINUS, ellipticity=ellipticity)

    @classmethod
    def laplace(cls, n: int) -> "OperatorSpec":
        return cls(kind=OperatorKind.LAPLACE, ellipticity=EllipticityTriple(1.0, 1.0, n))

    @classmethod
    def bellman(
        cls,
        controls: Iterable,
        ellipticity: EllipticityTriple,
        orbit: bool = False,
        strict: bool = True,
    ) -> "OperatorSpec":
        """
        Builds a Bellman operator F(M) = max_k tr(A_k·M) over a finite control list.

        Args:
            controls: Symmetric control matrices A_k.
            ellipticity: The triple the controls are meant to respect.
            orbit: Whether every control acts through all rotations.
            strict: Reject controls whose spectrum leaves [λ, Λ]. Disable to build
                    deliberately ill-posed operators for the ellipticity check.

        Returns:
            The operator spec.
        """
        controls = tuple(SymMatrix.coerce(control) for control in controls)
        if strict:
            for control in controls:
                spectrum = control.eigenvalues()
                slack = ZERO_EIGENVALUE * (1.0 + ellipticity.upper)
                if spectrum[0] < ellipticity.lower - slack or spectrum[-1] > ellipticity.upper + slack:
                    raise RejectedConfiguration(
                        f"Invalid Bellman control: spectrum {spectrum.tolist()} outside "
                        f"[{ellipticity.lower}, {ellipticity.upper}]"
                    )
        return cls(
            kind=OperatorKind.BELLMAN,
            ellipticity=ellipticity,
            controls=controls,
            orbit=orbit,
        )

    @classmethod
    def shifted(
        cls,
        base: "OperatorSpec",
        shift: float = 0.0,
        offset: SymMatrix | None = None,
    ) -> "OperatorSpec":
        return cls(
            kind=OperatorKind.SHIFTED,
            ellipticity=base.ellipticity,
            shift=float(shift),
            offset=None if offset is None else SymMatrix.coerce(offset),
            base=base,
        )


def _signed_sums(matrix: SymMatrix) -> tuple[float, float]:
    spectrum = matrix.eigenvalues()
    spectrum = spectrum[np.abs(spectrum) > ZERO_EIGENVALUE]
    return float(spectrum[spectrum > 0].sum()), float(spectrum[spectrum < 0].sum())


def _check_order(matrix: SymMatrix, n: int):
    if matrix.order != n:
        raise RejectedInput(f"Invalid matrix order: {matrix.order} (expected {n})")


def pucci_plus(matrix, ellipticity: EllipticityTriple) -> float:
    """
    Maximal Pucci operator: Λ·(sum of positive eigenvalues) + λ·(sum of negative eigenvalues).

    Args:
        matrix: Symmetric matrix of order ``ellipticity.n``.
        ellipticity: The (λ, Λ, n) triple.

    Returns:
        M+(matrix).
    """
    matrix = SymMatrix.coerce(matrix)
    _check_order(matrix, ellipticity.n)
    positive, negative = _signed_sums(matrix)
    return ellipticity.upper * positive + ellipticity.lower * negative


def pucci_minus(matrix, ellipticity: EllipticityTriple) -> float:
    """
    Minimal Pucci operator, computed as −M+(−matrix) so the two stay exact duals.

    Returns:
        M−(matrix) = λ·(sum of positive eigenvalues) + Λ·(sum of negative eigenvalues).
    """
    return -pucci_plus(-SymMatrix.coerce(matrix), ellipticity)


def dual(operator: OperatorSpec) -> OperatorSpec:
    """
    Returns:
        The operator M ↦ −F(−M).
    """
    return OperatorSpec(
        kind=OperatorKind.DUAL, ellipticity=operator.ellipticity, base=operator
    )


def _bellman(operator: OperatorSpec, matrix: SymMatrix) -> float:
    if operator.orbit:
        spectrum = matrix.eigenvalues()
        return max(float(control.eigenvalues() @ spectrum) for control in operator.controls)
    return max(float(np.sum(control.entries * matrix.entries)) for control in operator.controls)


def evaluate(operator: OperatorSpec, matrix) -> float:
    """
    Evaluates F(M).

    Args:
        operator: Any operator spec.
        matrix: Symmetric matrix of order ``operator.ellipticity.n``.

    Returns:
        The operator value.
    """
    matrix = SymMatrix.coerce(matrix)
    _check_order(matrix, operator.ellipticity.n)
    match operator.kind:
        case OperatorKind.PUCCI_PLUS:
            return pucci_plus(matrix, operator.ellipticity)
        case OperatorKind.PUCCI_MINUS:
            return pucci_minus(matrix, operator.ellipticity)
        case OperatorKind.LAPLACE:
            return matrix.trace()
        case OperatorKind.BELLMAN:
            return _bellman(operator, matrix)
        case OperatorKind.SHIFTED:
            shifted = matrix if operator.offset is None else matrix + operator.offset
            return evaluate(operator.base, shifted) - operator.shift
        case OperatorKind.DUAL:
            return -evaluate(operator.base, -matrix)
        case _:
            raise RejectedConfiguration(f"Unexpected operator kind: {operator.kind}")


def radial_hessian_spectrum(du: float, ddu: float, r: float, n: int) -> np.ndarray:
    """
    Spectrum of the Hessian of a radial function u(|x|): u'' once and u'/r with multiplicity n − 1.

    Returns:
        The eigenvalues in ascending order.
    """
    if not r > 0:
        raise RejectedInput(f"Invalid radius: {r}")
    if n < 2:
        raise RejectedInput(f"Invalid dimension: {n}")
    return np.sort(np.array([ddu] + [du / r] * (n - 1), dtype=float))


@dataclass(frozen=True)
class PropertyReport:
    passed: bool
    worst_violation: float
    trials: int

    def to_dict(self) -> dict:
        return asdict(self)


def _random_matrix(rng: np.random.Generator, n: int, semidefinite: bool = False) -> SymMatrix:
    sample = rng.normal(size=(n, n))
    if semidefinite:
        sample = sample @ sample.T
    return SymMatrix.symmetrized(sample)


def check_uniform_ellipticity(
    operator: OperatorSpec, trials: int = 1000, seed: int = 0
) -> PropertyReport:
    """
    Samples pairs (M, N) and checks M−(M) ≤ F(M + N) − F(N) ≤ M+(M).

    Every other M is positive semidefinite so controls outside [λI, ΛI] get exposed.

    Args:
        operator: Operator to check against its own ellipticity triple.
        trials: Number of sampled pairs.
        seed: Seed of the sampling generator.

    Returns:
        Report whose ``worst_violation`` is the largest scaled excess (negative when every sample had slack).
    """
    if trials < 1:
        raise RejectedInput(f"Invalid trial count: {trials}")
    rng = np.random.default_rng(seed)
    ellipticity = operator.ellipticity
    worst = -np.inf
    for trial in range(trials):
        m = _random_matrix(rng, ellipticity.n, semidefinite=trial % 2 == 1)
        n = _random_matrix(rng, ellipticity.n)
        base_value = evaluate(operator, n)
        increment = evaluate(operator, m + n) - base_value
        lower = pucci_minus(m, ellipticity)
        upper = pucci_plus(m, ellipticity)
        scale = 1.0 + max(abs(lower), abs(upper), abs(base_value))
        worst = max(worst, max(lower - increment, increment - upper) / scale)
    _logger.debug("Ellipticity check for %s: worst violation %.3e", operator.kind.value, worst)
    return PropertyReport(
        passed=bool(worst <= SANDWICH_TOLERANCE), worst_violation=float(worst), trials=trials
    )


def check_homogeneity(
    operator: OperatorSpec,
    trials: int = 1000,
    seed: int = 0,
    scales: Iterable[float] | None = None,
) -> PropertyReport:
    """
    Checks F(tM) = t·F(M) to relative 1e−12 on sampled t > 0 and M.

    Args:
        operator: Operator to check.
        trials: Number of sampled matrices.
        seed: Seed of the sampling generator.
        scales: Fixed scale factors to cycle through instead of sampling t from [0.1, 10].

    Returns:
        Report with the worst relative violation.
    """
    if trials < 1:
        raise RejectedInput(f"Invalid trial count: {trials}")
    scales = None if scales is None else [float(t) for t in scales]
    if scales is not None and (not scales or min(scales) <= 0):
        raise RejectedInput(f"Invalid scales: {scales}")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for trial in range(trials):
        m = _random_matrix(rng, operator.ellipticity.n)
        t = scales[trial % len(scales)] if scales else rng.uniform(0.1, 10.0)
        expected = t * evaluate(operator, m)
        actual = evaluate(operator, t * m)
        worst = max(worst, abs(actual - expected) / max(1.0, abs(expected)))
    return PropertyReport(
        passed=bool(worst <= HOMOGENEITY_TOLERANCE), worst_violation=float(worst), trials=trials
    )


def is_rotation_invariant(operator: OperatorSpec) -> bool:
    match operator.kind:
        case OperatorKind.PUCCI_PLUS | OperatorKind.PUCCI_MINUS | OperatorKind.LAPLACE:
            return True
        case OperatorKind.BELLMAN:
            return operator.orbit or all(c.is_isotropic() for c in operator.controls)
        case OperatorKind.SHIFTED:
            isotropic_offset = operator.offset is None or operator.offset.is_isotropic()
            return isotropic_offset and is_rotation_invariant(operator.base)
        case _:
            return is_rotation_invariant(operator.base)


def is_homogeneous(operator: OperatorSpec) -> bool:
    match operator.kind:
        case OperatorKind.SHIFTED:
            translated = operator.offset is not None and np.any(operator.offset.entries != 0)
            if operator.shift != 0 or translated:
                return False
            return is_homogeneous(operator.base)
        case OperatorKind.DUAL:
            return is_homogeneous(operator.base)
        case _:
            return True


def curvature(operator: OperatorSpec) -> int:
    """
    Returns:
        1 for convex operators, −1 for concave ones and 0 for linear ones.
    """
    match operator.kind:
        case OperatorKind.LAPLACE:
            return 0
        case OperatorKind.PUCCI_PLUS:
            return 1
        case OperatorKind.PUCCI_MINUS:
            return -1
        case OperatorKind.BELLMAN:
            single = len(operator.controls) == 1 and not operator.orbit
            return 0 if single else 1
        case OperatorKind.SHIFTED:
            return curvature(operator.base)
        case _:
            return -curvature(operator.base)


def is_convex(operator: OperatorSpec) -> bool:
    return curvature(operator) >= 0


@dataclass(frozen=True)
class RadialPolicies:
    """
    Affine policies of a rotation-invariant operator on radial Hessians:
    F = sense-optimum over p of radial[p]·u'' + tangential[p]·u'/r + constant[p].
    The tangential coefficient already carries the multiplicity n − 1.
    """

    sense: int
    radial: np.ndarray
    tangential: np.ndarray
    constant: np.ndarray

    @property
    def count(self) -> int:
        return len(self.radial)

    def mesh_ratio(self) -> float:
        """
        Returns:
            min over policies of radial / tangential; central differences of u'/r stay
            monotone at radius r when h ≤ 2·r·mesh_ratio.
        """
        active = self.tangential > 0
        if not np.any(active):
            return np.inf
        return float(np.min(self.radial[active] / self.tangential[active]))


def _pucci_coefficients(ellipticity: EllipticityTriple) -> tuple[np.ndarray, np.ndarray]:
    bounds = (ellipticity.lower, ellipticity.upper)
    pairs = list(itertools.product(bounds, bounds))
    radial = np.array([a for a, _ in pairs])
    tangential = np.array([(ellipticity.n - 1) * b for _, b in pairs])
    return radial, tangential


def radial_policies(operator: OperatorSpec) -> RadialPolicies:
    """
    Reduces a rotation-invariant operator to its radial policy set.

    Raises:
        RejectedConfiguration: if the operator is not rotation invariant.
    """
    if not is_rotation_invariant(operator):
        raise RejectedConfiguration(
            f"Invalid radial operator: {operator.kind.value} is not rotation invariant"
        )
    n = operator.ellipticity.n
    match operator.kind:
        case OperatorKind.PUCCI_PLUS | OperatorKind.PUCCI_MINUS:
            radial, tangential = _pucci_coefficients(operator.ellipticity)
            sense = MAX if operator.kind == OperatorKind.PUCCI_PLUS else MIN
            return RadialPolicies(sense, radial, tangential, np.zeros(len(radial)))
        case OperatorKind.LAPLACE:
            return RadialPolicies(MAX, np.array([1.0]), np.array([n - 1.0]), np.zeros(1))
        case OperatorKind.BELLMAN:
            radial, tangential = [], []
            for control in operator.controls:
                spectrum = control.eigenvalues()
                for value in np.unique(spectrum):
                    radial.append(value)
                    tangential.append(spectrum.sum() - value)
            return RadialPolicies(
                MAX, np.array(radial), np.array(tangential), np.zeros(len(radial))
            )
        case OperatorKind.SHIFTED:
            base = radial_policies(operator.base)
            level = 0.0 if operator.offset is None else operator.offset.trace() / n
            constant = base.constant + level * (base.radial + base.tangential) - operator.shift
            return RadialPolicies(base.sense, base.radial, base.tangential, constant)
        case _:
            base = radial_policies(operator.base)
            return RadialPolicies(-base.sense, base.radial, base.tangential, -base.constant)


@dataclass(frozen=True)
class FramePolicies:
    """
    Affine policies of a planar operator on directional second differences: policy p acts on
    the orthogonal frame ``frame[p]`` as first[p]·u_ee + second[p]·u_e'e' + constant[p], where
    frame j has directions at angles j·π/(2·frames) and j·π/(2·frames) + π/2.
    """

    sense: int
    frames: int
    frame: np.ndarray
    first: np.ndarray
    second: np.ndarray
    constant: np.ndarray

    @property
    def count(self) -> int:
        return len(self.frame)


def frame_angle(frame: int, frames: int) -> float:
    return frame * np.pi / (2 * frames)


def _control_policies(control: SymMatrix, frames: int, orbit: bool) -> list[tuple[int, float, float]]:
    values, vectors = linalg.eigh(control.entries)
    small, large = values
    if orbit:
        return [(j, a, b) for j in range(frames) for a, b in ((small, large), (large, small))]
    if control.is_isotropic():
        return [(0, small, large)]
    angle = np.arctan2(vectors[1, 0], vectors[0, 0]) % np.pi
    direction = int(np.rint(angle / frame_angle(1, frames))) % (2 * frames)
    if direction < frames:
        return [(direction, small, large)]
    return [(direction - frames, large, small)]


def frame_policies(operator: OperatorSpec, frames: int) -> FramePolicies:
    """
    Reduces a planar operator to policies over ``frames`` orthogonal frames.

    Pucci operators use every endpoint combination on every frame. A Bellman control is snapped
    to the frame nearest to its eigenvectors, or spread over all frames for orbit families.

    Raises:
        RejectedConfiguration: if the operator is not planar or ``frames`` < 1.
    """
    if operator.ellipticity.n != 2:
        raise RejectedConfiguration(
            f"Invalid planar operator: dimension {operator.ellipticity.n}"
        )
    if frames < 1:
        raise RejectedConfiguration(f"Invalid frame count: {frames}")
    match operator.kind:
        case OperatorKind.PUCCI_PLUS | OperatorKind.PUCCI_MINUS:
            bounds = (operator.ellipticity.lower, operator.ellipticity.upper)
            rows = [
                (j, a, b) for j in range(frames) for a, b in itertools.product(bounds, bounds)
            ]
            sense = MAX if operator.kind == OperatorKind.PUCCI_PLUS else MIN
        case OperatorKind.LAPLACE:
            rows, sense = [(0, 1.0, 1.0)], MAX
        case OperatorKind.BELLMAN:
            rows = [
                row
                for control in operator.controls
                for row in _control_policies(control, frames, operator.orbit)
            ]
            sense = MAX
        case OperatorKind.SHIFTED:
            base = frame_policies(operator.base, frames)
            constant = base.constant - operator.shift
            if operator.offset is not None:
                angles = base.frame * np.pi / (2 * frames)
                e = np.stack([np.cos(angles), np.sin(angles)], axis=1)
                e_perp = np.stack([-np.sin(angles), np.cos(angles)], axis=1)
                offset = operator.offset.entries
                along = np.einsum("pi,ij,pj->p", e, offset, e)
                across = np.einsum("pi,ij,pj->p", e_perp, offset, e_perp)
                constant = constant + base.first * along + base.second * across
            return FramePolicies(
                base.sense, frames, base.frame, base.first, base.second, constant
            )
        case _:
            base = frame_policies(operator.base, frames)
            return FramePolicies(
                -base.sense, frames, base.frame, base.first, base.second, -base.constant
            )
    frame, first, second = (np.array(column) for column in zip(*rows))
    return FramePolicies(
        sense, frames, frame.astype(int), first.astype(float), second.astype(float), np.zeros(len(rows))
    )


def operator_to_dict(operator: OperatorSpec) -> dict:
    result = {"kind": operator.kind.value, **operator.ellipticity.to_dict()}
    if operator.kind == OperatorKind.BELLMAN:
        result["controls"] = [control.to_list() for control in operator.controls]
        result["orbit"] = operator.orbit
    if operator.kind == OperatorKind.SHIFTED:
        result["shift"] = operator.shift
        result["offset"] = None if operator.offset is None else operator.offset.to_list()
    if operator.base is not None:
        result["base"] = operator_to_dict(operator.base)
    return result


def operator_from_dict(data: dict) -> OperatorSpec:
    try:
        kind = OperatorKind(data["kind"])
        ellipticity = EllipticityTriple(
            float(data["lambda"]), float(data["Lambda"]), int(data["n"])
        )
    except (KeyError, ValueError) as error:
        raise RejectedConfiguration(f"Invalid operator block: {data}") from error
    match kind:
        case OperatorKind.PUCCI_PLUS:
            return OperatorSpec.pucci_plus(ellipticity)
        case OperatorKind.PUCCI_MINUS:
            return OperatorSpec.pucci_minus(ellipticity)
        case OperatorKind.LAPLACE:
            return OperatorSpec.laplace(ellipticity.n)
        case OperatorKind.BELLMAN:
            return OperatorSpec.bellman(
                data.get("controls", []), ellipticity, orbit=bool(data.get("orbit", False))
            )
        case OperatorKind.SHIFTED:
            offset = data.get("offset")
            return OperatorSpec.shifted(
                operator_from_dict(data["base"]),
                shift=float(data.get("shift", 0.0)),
                offset=None if offset is None else SymMatrix(offset),
            )
        case _:
            return dual(operator_from_dict(data["base"]))


def check_pucci_class(hessians, ellipticity: EllipticityTriple, tolerance: float = SANDWICH_TOLERANCE) -> PropertyReport:
    """
    Checks M−(D²v) ≤ 0 ≤ M+(D²v) on sampled Hessians, i.e. membership of v in S(λ, Λ, 0).

    Args:
        hessians: Symmetric matrices of order ``ellipticity.n``.
        ellipticity: The (λ, Λ, n) triple of the class.
        tolerance: Allowed violation, scaled by 1 + |M±|.

    Returns:
        Report with the worst scaled violation.
    """
    worst, trials = -np.inf, 0
    for hessian in hessians:
        upper = pucci_plus(hessian, ellipticity)
        lower = pucci_minus(hessian, ellipticity)
        scale = 1.0 + max(abs(upper), abs(lower))
        worst = max(worst, max(lower, -upper) / scale)
        trials += 1
    if trials == 0:
        raise RejectedInput("Invalid Hessian sample: empty")
    return PropertyReport(passed=bool(worst <= tolerance), worst_violation=float(worst), trials=trials)
