import numpy as np
import pytest

from hypothesis import given, settings, strategies as st

import farfield.names as names

from farfield.errors import RejectedConfiguration, RejectedInput
from farfield.fundamental import (
    EstimateOptions,
    EstimatedTail,
    FundamentalSolution,
    Logarithmic,
    Orientation,
    RadialFunction,
    Side,
    case_label,
    estimate_scaling_exponent,
    exponent_table,
    fundamental_pair,
    growth_case,
    normalize_upward,
    pair_signs,
    radial_residual,
    scaling_exponents,
)
from farfield.operators import EllipticityTriple, OperatorSpec, dual

SUBCRITICAL = EllipticityTriple(1.0, 2.0, 2)
CRITICAL = EllipticityTriple(1.0, 2.0, 3)
SUPERCRITICAL = EllipticityTriple(1.0, 2.0, 4)
QUICK = EstimateOptions(far_radii=(16.0, 32.0, 64.0))


@pytest.mark.parametrize(
    "ellipticity, alpha_plus, alpha_minus, case, label",
    [
        (SUBCRITICAL, -0.5, 1.0, -1, "alpha+<0"),
        (CRITICAL, 0.0, 3.0, 0, "alpha+=0"),
        (SUPERCRITICAL, 0.5, 5.0, 1, "alpha+>0"),
        (EllipticityTriple(1.0, 1.0, 3), 1.0, 1.0, 1, "alpha+>0"),
        (EllipticityTriple(1.0, 1.0, 2), 0.0, 0.0, 0, "alpha+=0"),
    ],
)
def test_scaling_exponents(ellipticity, alpha_plus, alpha_minus, case, label):
    exponents = scaling_exponents(ellipticity)
    assert (exponents.alpha_plus, exponents.alpha_minus) == pytest.approx((alpha_plus, alpha_minus))
    assert growth_case(ellipticity) == case
    assert case_label(ellipticity) == label


def test_fundamental_values():
    e_plus = FundamentalSolution.upward(Side.PUCCI_PLUS, SUBCRITICAL)
    assert e_plus.alpha_star == -0.5
    assert e_plus.evaluate(4.0) == pytest.approx(-2.0)
    assert e_plus.derivative(4.0) == pytest.approx(-0.25)
    assert e_plus.second_derivative(4.0) == pytest.approx(0.03125)

    log_branch = FundamentalSolution.upward(Side.PUCCI_PLUS, CRITICAL)
    assert isinstance(log_branch.branch, Logarithmic)
    assert log_branch.alpha_star == 0.0
    assert log_branch(np.e) == pytest.approx(-1.0)

    harmonic = FundamentalSolution.upward(Side.PUCCI_MINUS, EllipticityTriple(1.0, 1.0, 3))
    assert tuple(harmonic.evaluate([1.0, 2.0, 4.0])) == pytest.approx((1.0, 0.5, 0.25))


def test_downward_solutions_flip_the_other_side():
    e_minus = FundamentalSolution.upward(Side.PUCCI_MINUS, SUPERCRITICAL)
    e_plus_down = FundamentalSolution.downward(Side.PUCCI_PLUS, SUPERCRITICAL)
    assert e_plus_down.orientation == Orientation.DOWNWARD
    assert e_plus_down.operator() == OperatorSpec.pucci_plus(SUPERCRITICAL)
    assert e_plus_down.evaluate(3.0) == pytest.approx(-e_minus.evaluate(3.0))
    assert e_plus_down.to_dict()["side"] == "pucci_plus"


@pytest.mark.parametrize("r", [0.0, -1.0])
def test_fundamental_rejects_non_positive_radius(r):
    with pytest.raises(RejectedInput):
        FundamentalSolution.upward(Side.PUCCI_PLUS, SUBCRITICAL).evaluate(r)


@settings(max_examples=200, deadline=None)
@given(
    st.floats(min_value=0.5, max_value=2.0),
    st.floats(min_value=1.0, max_value=5.0),
    st.integers(min_value=2, max_value=5),
    st.floats(min_value=0.5, max_value=50.0),
    st.sampled_from(list(Side)),
    st.booleans(),
)
def test_fundamental_solutions_solve_their_operator(lower, ratio, n, r, side, upward):
    ellipticity = EllipticityTriple(lower, lower * ratio, n)
    make = FundamentalSolution.upward if upward else FundamentalSolution.downward
    solution = make(side, ellipticity)
    scale = n * (abs(solution.second_derivative(r)) + abs(solution.derivative(r) / r)) * ellipticity.upper
    assert abs(radial_residual(solution.operator(), solution, r)) <= 1e-9 * (1.0 + scale)


def test_radial_residual():
    paraboloid = RadialFunction(lambda r: r**2 / 2, lambda r: r, lambda r: np.ones_like(r))
    assert radial_residual(OperatorSpec.laplace(3), paraboloid, 2.0) == pytest.approx(3.0)
    assert radial_residual(OperatorSpec.pucci_plus(SUBCRITICAL), paraboloid, 2.0) == pytest.approx(4.0)
    bellman = OperatorSpec.bellman([np.diag([1.0, 2.0])], SUBCRITICAL)
    with pytest.raises(RejectedConfiguration):
        radial_residual(bellman, paraboloid, 2.0)


@pytest.mark.parametrize(
    "samples, alpha_star, scale, shift",
    [
        ([2.0, 4.0], 1.0, 0.5, 0.0),
        ([-2.0, -4.0], -0.5, 0.5, 0.0),
        ([1.0, 3.0], 0.0, 1.0, -2.0),
    ],
)
def test_normalize_upward(samples, alpha_star, scale, shift):
    normalization = normalize_upward(samples, alpha_star)
    assert (normalization.scale, normalization.shift) == (scale, shift)


@pytest.mark.parametrize("samples, alpha_star", [([], 1.0), ([-1.0, 2.0], 1.0)])
def test_normalize_upward_rejects(samples, alpha_star):
    with pytest.raises(RejectedInput):
        normalize_upward(samples, alpha_star)


def test_estimated_tail():
    assert EstimatedTail(0.5).evaluate(4.0) == pytest.approx(0.5)
    assert EstimatedTail(-0.5).evaluate(4.0) == pytest.approx(-2.0)
    assert EstimatedTail(0.0).evaluate(np.e) == pytest.approx(-1.0)
    assert EstimatedTail(1.0).derivative(2.0) == pytest.approx(-0.25)


def test_fundamental_pair():
    pair = fundamental_pair(OperatorSpec.pucci_plus(SUBCRITICAL))
    assert (pair.phi.side, pair.phi_tilde.side) == (Side.PUCCI_PLUS, Side.PUCCI_MINUS)
    assert (pair.phi.alpha_star, pair.phi_tilde.alpha_star) == (-0.5, 1.0)

    swapped = fundamental_pair(dual(OperatorSpec.pucci_plus(SUBCRITICAL)))
    assert (swapped.phi.side, swapped.phi_tilde.side) == (Side.PUCCI_MINUS, Side.PUCCI_PLUS)

    planar = fundamental_pair(OperatorSpec.laplace(2))
    assert isinstance(planar.phi.branch, Logarithmic)
    assert planar.phi.evaluate(2.0) == planar.phi_tilde.evaluate(2.0)

    shifted = fundamental_pair(OperatorSpec.shifted(OperatorSpec.laplace(3)))
    assert shifted.phi.alpha_star == 1.0

    with pytest.raises(RejectedConfiguration):
        fundamental_pair(OperatorSpec.bellman([np.eye(2)], SUBCRITICAL))
    with pytest.raises(RejectedConfiguration):
        fundamental_pair(OperatorSpec.shifted(OperatorSpec.laplace(3), shift=1.0))


@pytest.mark.parametrize(
    "alpha_star, alpha_tilde_star, signs, known",
    [
        (-0.5, 1.0, (-1, 1), True),
        (0.0, 0.0, (0, 0), True),
        (0.5, 5.0, (1, 1), True),
        (-0.5, -0.2, (-1, -1), False),
    ],
)
def test_pair_signs(alpha_star, alpha_tilde_star, signs, known):
    result = pair_signs(alpha_star, alpha_tilde_star)
    assert (result.alpha_star, result.alpha_tilde_star) == signs
    assert result.known == known


@pytest.mark.parametrize(
    "operator, expected, tolerance",
    [
        (OperatorSpec.pucci_plus(SUPERCRITICAL), 0.5, 0.025),
        (OperatorSpec.pucci_minus(SUBCRITICAL), 1.0, 0.05),
        (OperatorSpec.laplace(3), 1.0, 0.02),
    ],
)
def test_estimate_scaling_exponent(operator, expected, tolerance):
    estimate = estimate_scaling_exponent(operator, QUICK)
    assert estimate.alpha_star == pytest.approx(expected, abs=tolerance)
    assert estimate.model == "power"
    assert not estimate.flagged
    assert estimate.within_bounds()
    assert len(estimate.per_radius) == 3


@pytest.mark.parametrize("operator", [OperatorSpec.pucci_plus(CRITICAL), OperatorSpec.laplace(2)])
def test_estimate_logarithmic_branch(operator):
    estimate = estimate_scaling_exponent(operator, QUICK)
    assert estimate.model == "log"
    assert abs(estimate.alpha_star) <= 0.02


def test_estimate_bellman_orbit_within_bounds():
    operator = OperatorSpec.bellman(
        [np.eye(3), 2 * np.eye(3), np.diag([1.0, 2.0, 2.0])], CRITICAL, orbit=True
    )
    estimate = estimate_scaling_exponent(operator, EstimateOptions(far_radii=(16.0, 32.0, 64.0), workers=2))
    assert estimate.exponents.alpha_plus <= estimate.alpha_star + 0.02
    assert estimate.alpha_star <= estimate.exponents.alpha_minus + 0.02


@pytest.mark.parametrize(
    "operator, options",
    [
        (OperatorSpec.bellman([np.diag([1.0, 2.0])], SUBCRITICAL), QUICK),
        (OperatorSpec.shifted(OperatorSpec.laplace(3), shift=1.0), QUICK),
        (OperatorSpec.laplace(3), EstimateOptions(far_radii=(16.0,))),
        (OperatorSpec.laplace(3), EstimateOptions(far_radii=(4.0, 16.0))),
    ],
)
def test_estimate_rejects(operator, options):
    with pytest.raises(RejectedConfiguration):
        estimate_scaling_exponent(operator, options)


def test_exponent_table():
    table = exponent_table([OperatorSpec.laplace(3), OperatorSpec.pucci_plus(SUPERCRITICAL)], QUICK)
    assert table.columns == [
        names.LOWER,
        names.UPPER,
        names.DIMENSION,
        names.ALPHA_PLUS,
        names.ALPHA_MINUS,
        names.ALPHA_STAR_HAT,
        names.FIT_R2,
    ]
    assert tuple(table[names.DIMENSION]) == (3, 4)
    with pytest.raises(RejectedInput):
        exponent_table([], QUICK)
