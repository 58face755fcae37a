import numpy as np
import pytest

from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from farfield.errors import RejectedConfiguration, RejectedInput
from farfield.operators import (
    EllipticityTriple,
    OperatorKind,
    OperatorSpec,
    SymMatrix,
    check_homogeneity,
    check_pucci_class,
    check_uniform_ellipticity,
    curvature,
    dual,
    evaluate,
    frame_angle,
    frame_policies,
    is_convex,
    is_homogeneous,
    is_rotation_invariant,
    operator_from_dict,
    operator_to_dict,
    pucci_minus,
    pucci_plus,
    radial_hessian_spectrum,
    radial_policies,
)

PLANAR = EllipticityTriple(1.0, 2.0, 2)
SPATIAL = EllipticityTriple(1.0, 2.0, 3)
BELLMAN = OperatorSpec.bellman([np.diag([1.0, 2.0]), np.diag([2.0, 1.0]), np.eye(2)], PLANAR)

OPERATORS = [
    OperatorSpec.pucci_plus(PLANAR),
    OperatorSpec.pucci_minus(PLANAR),
    OperatorSpec.laplace(2),
    BELLMAN,
    dual(BELLMAN),
    OperatorSpec.bellman([np.eye(2), np.diag([1.0, 2.0])], PLANAR, orbit=True),
]

entries = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False, allow_infinity=False)
planar_matrices = arrays(np.float64, (2, 2), elements=entries).map(SymMatrix.symmetrized)


def test_pucci_values():
    matrix = SymMatrix.diagonal([1.0, -2.0])
    assert pucci_plus(matrix, PLANAR) == 0.0
    assert pucci_minus(matrix, PLANAR) == -3.0
    assert pucci_plus(np.diag([3.0, 1.0]), PLANAR) == 8.0
    assert pucci_minus(np.diag([-3.0, -1.0]), PLANAR) == -8.0


def test_pucci_ignores_tiny_eigenvalues():
    matrix = SymMatrix.diagonal([1e-14, -1e-14, 1.0])
    assert pucci_plus(matrix, SPATIAL) == 2.0
    assert pucci_minus(matrix, SPATIAL) == 1.0


@pytest.mark.parametrize(
    "operator, expected",
    [
        (OperatorSpec.laplace(2), 3.0),
        (BELLMAN, 5.0),
        (OperatorSpec.bellman([np.eye(2), 2 * np.eye(2)], PLANAR), 6.0),
        (dual(BELLMAN), 3.0),
        (OperatorSpec.shifted(OperatorSpec.laplace(2), shift=1.0), 2.0),
        (OperatorSpec.shifted(OperatorSpec.laplace(2), offset=np.eye(2)), 5.0),
    ],
)
def test_evaluate(operator, expected):
    assert evaluate(operator, np.diag([1.0, 2.0])) == pytest.approx(expected)


def test_evaluate_rejects_wrong_order():
    with pytest.raises(RejectedInput):
        evaluate(OperatorSpec.laplace(3), np.eye(2))


@pytest.mark.parametrize(
    "entries",
    [
        [[1.0, 2.0], [0.0, 1.0]],
        [[1.0, 2.0, 3.0]],
        [[np.nan, 0.0], [0.0, 1.0]],
    ],
)
def test_sym_matrix_rejects(entries):
    with pytest.raises(RejectedInput):
        SymMatrix(entries)


@pytest.mark.parametrize("triple", [(0.0, 1.0, 2), (2.0, 1.0, 2), (1.0, 1.0, 1), (1.0, np.inf, 2)])
def test_ellipticity_triple_rejects(triple):
    with pytest.raises(RejectedInput):
        EllipticityTriple(*triple)


def test_bellman_rejects():
    with pytest.raises(RejectedConfiguration):
        OperatorSpec.bellman([], PLANAR)
    with pytest.raises(RejectedConfiguration):
        OperatorSpec.bellman([3 * np.eye(2)], PLANAR)
    with pytest.raises(RejectedConfiguration):
        OperatorSpec.bellman([np.eye(3)], PLANAR)


@pytest.mark.parametrize("operator", OPERATORS)
def test_uniform_ellipticity(operator):
    report = check_uniform_ellipticity(operator, trials=200, seed=7)
    assert report.passed
    assert report.trials == 200


def test_uniform_ellipticity_exposes_ill_posed_controls():
    operator = OperatorSpec.bellman([3 * np.eye(2)], PLANAR, strict=False)
    report = check_uniform_ellipticity(operator, trials=20, seed=1)
    assert not report.passed
    assert report.worst_violation > 0


@pytest.mark.parametrize("operator", OPERATORS)
def test_homogeneity(operator):
    assert is_homogeneous(operator)
    assert check_homogeneity(operator, trials=100, seed=3).passed


def test_shifted_operator_is_not_homogeneous():
    operator = OperatorSpec.shifted(OperatorSpec.pucci_plus(PLANAR), shift=1.0)
    assert not is_homogeneous(operator)
    assert not check_homogeneity(operator, trials=10, scales=[2.0]).passed
    with pytest.raises(RejectedInput):
        check_homogeneity(operator, scales=[0.0])


@settings(max_examples=200, deadline=None)
@given(planar_matrices, planar_matrices)
def test_pucci_sandwich(m, n):
    for operator in OPERATORS:
        increment = evaluate(operator, m + n) - evaluate(operator, n)
        slack = 1e-9 * (1.0 + np.abs(m.entries).max() + np.abs(n.entries).max())
        assert pucci_minus(m, PLANAR) - slack <= increment <= pucci_plus(m, PLANAR) + slack


@settings(max_examples=200, deadline=None)
@given(planar_matrices)
def test_duality(m):
    for operator in OPERATORS:
        assert evaluate(dual(operator), m) == pytest.approx(-evaluate(operator, -m), abs=1e-12)
    assert pucci_minus(m, PLANAR) == pytest.approx(-pucci_plus(-m, PLANAR))


@settings(max_examples=100, deadline=None)
@given(planar_matrices, st.floats(min_value=0.01, max_value=100.0))
def test_pucci_homogeneity_property(m, t):
    expected = t * pucci_plus(m, PLANAR)
    assert pucci_plus(t * m, PLANAR) == pytest.approx(expected, rel=1e-9, abs=1e-9)


@pytest.mark.parametrize(
    "operator, expected",
    [
        (OperatorSpec.pucci_plus(PLANAR), 1),
        (OperatorSpec.pucci_minus(PLANAR), -1),
        (OperatorSpec.laplace(2), 0),
        (BELLMAN, 1),
        (dual(BELLMAN), -1),
        (OperatorSpec.bellman([np.diag([1.0, 2.0])], PLANAR), 0),
    ],
)
def test_curvature(operator, expected):
    assert curvature(operator) == expected
    assert is_convex(operator) == (expected >= 0)


def test_rotation_invariance():
    assert is_rotation_invariant(OperatorSpec.pucci_minus(SPATIAL))
    assert not is_rotation_invariant(BELLMAN)
    assert is_rotation_invariant(OperatorSpec.bellman([np.eye(2), 2 * np.eye(2)], PLANAR))
    shifted = OperatorSpec.shifted(OperatorSpec.laplace(2), offset=np.diag([1.0, 2.0]))
    assert not is_rotation_invariant(shifted)
    with pytest.raises(RejectedConfiguration):
        radial_policies(BELLMAN)


def test_radial_policies():
    policies = radial_policies(OperatorSpec.pucci_plus(SPATIAL))
    assert policies.count == 4
    assert policies.sense == 1
    assert policies.mesh_ratio() == 0.25
    orbit = OperatorSpec.bellman([np.diag([1.0, 2.0, 2.0])], SPATIAL, orbit=True)
    policies = radial_policies(orbit)
    assert tuple(policies.radial) == (1.0, 2.0)
    assert tuple(policies.tangential) == (4.0, 3.0)
    assert radial_policies(dual(orbit)).sense == -1


def test_radial_policies_reproduce_evaluate():
    # Radial Hessian of u = r^2/2 - ln r at r = 2 in three dimensions.
    du, ddu, r = 2.0 - 0.5, 1.0 + 0.25, 2.0
    spectrum = radial_hessian_spectrum(du, ddu, r, 3)
    for operator in [OperatorSpec.pucci_plus(SPATIAL), OperatorSpec.pucci_minus(SPATIAL), OperatorSpec.laplace(3)]:
        policies = radial_policies(operator)
        values = policies.radial * ddu + policies.tangential * du / r + policies.constant
        best = values.max() if policies.sense == 1 else values.min()
        assert best == pytest.approx(evaluate(operator, np.diag(spectrum)))


def test_radial_hessian_spectrum():
    assert tuple(radial_hessian_spectrum(2.0, 3.0, 1.0, 3)) == (2.0, 2.0, 3.0)
    with pytest.raises(RejectedInput):
        radial_hessian_spectrum(1.0, 1.0, 0.0, 2)


def test_frame_policies():
    policies = frame_policies(OperatorSpec.pucci_plus(PLANAR), 4)
    assert policies.count == 16
    assert set(policies.frame) == {0, 1, 2, 3}
    assert frame_policies(OperatorSpec.laplace(2), 4).count == 1
    assert frame_policies(dual(OperatorSpec.laplace(2)), 4).sense == -1
    assert frame_angle(2, 4) == pytest.approx(np.pi / 4)
    with pytest.raises(RejectedConfiguration):
        frame_policies(OperatorSpec.laplace(3), 4)


def test_frame_policies_snap_bellman_controls():
    policies = frame_policies(BELLMAN, 4)
    assert tuple(policies.frame) == (0, 0, 0)
    assert tuple(policies.first) == (1.0, 2.0, 1.0)
    assert tuple(policies.second) == (2.0, 1.0, 1.0)


def test_operator_serialization():
    operator = OperatorSpec.shifted(OperatorSpec.bellman([np.eye(2)], PLANAR, orbit=True), shift=0.5)
    restored = operator_from_dict(operator_to_dict(operator))
    assert restored.kind == OperatorKind.SHIFTED
    assert restored.shift == 0.5
    assert restored.base.orbit
    assert restored.base.controls[0].to_list() == [[1.0, 0.0], [0.0, 1.0]]
    with pytest.raises(RejectedConfiguration):
        operator_from_dict({"kind": "unknown", "lambda": 1, "Lambda": 1, "n": 2})


def test_pucci_class():
    assert check_pucci_class([np.diag([1.0, -1.0])], EllipticityTriple(1.0, 1.0, 2)).passed
    report = check_pucci_class([np.eye(2)], PLANAR)
    assert not report.passed
    assert report.worst_violation == pytest.approx(2.0 / 5.0)
    with pytest.raises(RejectedInput):
        check_pucci_class([], PLANAR)
