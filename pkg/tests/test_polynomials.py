import numpy as np
import pytest

from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from farfield.errors import RejectedInput
from farfield.polynomials import Polynomial, evaluation_cloud, fit_polynomial, unit_directions

QUADRATIC = Polynomial(1.0, [1.0, 2.0], np.diag([2.0, 0.0]))

coefficients = st.floats(min_value=-5.0, max_value=5.0, allow_nan=False, allow_infinity=False)


def test_polynomial_evaluation():
    assert QUADRATIC.evaluate([1.0, 1.0])[0] == 5.0
    assert tuple(QUADRATIC([[0.0, 0.0], [2.0, 0.0]])) == (1.0, 7.0)
    assert tuple(QUADRATIC.gradient_at([1.0, 1.0])[0]) == (3.0, 2.0)
    assert QUADRATIC.degree == 2
    assert Polynomial.linear([0.0, 1.0]).degree == 1
    assert Polynomial.zero(3).degree == 0
    assert QUADRATIC.dimension == 2


def test_polynomial_symmetrizes_hessian():
    p = Polynomial(0.0, [0.0, 0.0], [[1.0, 2.0], [0.0, 1.0]])
    assert p.hessian.tolist() == [[1.0, 1.0], [1.0, 1.0]]
    assert p.hessian_matrix().is_isotropic() is False


def test_polynomial_arithmetic():
    total = QUADRATIC + Polynomial.linear([1.0, -2.0], 3.0)
    assert (total.constant, tuple(total.gradient)) == (4.0, (2.0, 0.0))
    difference = total - QUADRATIC
    assert difference.degree == 1
    assert difference.with_constant(0.0).evaluate([1.0, 1.0])[0] == -1.0
    restored = Polynomial.from_dict(QUADRATIC.to_dict())
    assert restored.hessian.tolist() == QUADRATIC.hessian.tolist()


@pytest.mark.parametrize(
    "gradient, hessian",
    [([1.0, 2.0], np.eye(3)), ([np.nan, 0.0], np.eye(2)), ([0.0, 0.0], [[np.inf, 0.0], [0.0, 1.0]])],
)
def test_polynomial_rejects(gradient, hessian):
    with pytest.raises(RejectedInput):
        Polynomial(0.0, gradient, hessian)


@settings(max_examples=100, deadline=None)
@given(coefficients, arrays(np.float64, 2, elements=coefficients), arrays(np.float64, 3, elements=coefficients))
def test_fit_recovers_planar_quadratics(constant, gradient, entries):
    hessian = np.array([[entries[0], entries[1]], [entries[1], entries[2]]])
    expected = Polynomial(constant, gradient, hessian)
    points = evaluation_cloud(2, 4.0)
    fitted = fit_polynomial(points, expected(points), 2)
    assert fitted.constant == pytest.approx(constant, abs=1e-8)
    assert fitted.gradient == pytest.approx(gradient, abs=1e-8)
    assert fitted.hessian == pytest.approx(hessian, abs=1e-8)


def test_fit_recovers_spatial_quadratic():
    hessian = np.array([[1.0, 0.5, 0.0], [0.5, -2.0, 0.25], [0.0, 0.25, 3.0]])
    expected = Polynomial(-1.0, [0.5, 0.0, 2.0], hessian)
    points = evaluation_cloud(3, 8.0)
    fitted = fit_polynomial(points, expected(points), 2)
    assert fitted.hessian == pytest.approx(hessian, abs=1e-8)
    linear = fit_polynomial(points, Polynomial.linear([1.0, 2.0, 3.0], 4.0)(points), 1)
    assert (linear.constant, linear.degree) == (pytest.approx(4.0), 1)


def test_fit_rejects():
    points = evaluation_cloud(2, 1.0)
    with pytest.raises(RejectedInput):
        fit_polynomial(points, np.zeros(len(points)), 3)
    with pytest.raises(RejectedInput):
        fit_polynomial(points[:4], np.zeros(4), 2)
    with pytest.raises(RejectedInput):
        fit_polynomial(points, np.zeros(3), 1)


@pytest.mark.parametrize("n, count", [(2, 16), (3, 14), (4, 24)])
def test_unit_directions(n, count):
    directions = unit_directions(n)
    assert directions.shape == (count, n)
    assert np.linalg.norm(directions, axis=1) == pytest.approx(np.ones(count))


def test_evaluation_cloud():
    cloud = evaluation_cloud(2, 4.0)
    assert cloud.shape == (1 + 8 * 16, 2)
    assert tuple(cloud[0]) == (0.0, 0.0)
    assert np.linalg.norm(cloud, axis=1).max() == pytest.approx(4.0)
    assert evaluation_cloud(3, 1.0, rings=2).shape == (1 + 2 * 14, 3)
    with pytest.raises(RejectedInput):
        evaluation_cloud(2, 0.0)
    with pytest.raises(RejectedInput):
        evaluation_cloud(2, 1.0, rings=0)
