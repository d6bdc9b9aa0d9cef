"""Тесты отображений, метрик, оператора S и полей кореперов."""

import numpy as np
import pytest
from geom.errors import (
    DegenerateMapError,
    DomainError,
    InputError,
    NonPositiveMetricError,
    NotSelfAdjointError,
    RepeatedEigenvalueError,
)
from geom.grid import Grid
from geom.pullback import (
    REASON_DOMAIN,
    REASON_METRIC,
    REASON_OK,
    REASON_REPEATED,
    Box,
    MetricField,
    SmoothMap,
    covector_operator,
    frame_field,
    frame_from_operators,
    jacobian,
    parse_field,
    s_operator,
    spectral,
    tangent_operator,
)
from lang.printer import to_text

EXAMPLE = ("-cos(x2) + sqrt(2)*sin(x3)", "sin(x2) - sqrt(2)*cos(x3)", "sqrt(2)*x1 + x2")
CUBE = Box((-0.5, -0.5, -0.5), (0.5, 0.5, 0.5))
POINT = np.array([0.1, 0.2, -0.05])
ROOT2 = np.sqrt(2.0)
TOL = 1e-12
EIGEN_TOL = 1e-10


def example_values(x: np.ndarray) -> np.ndarray:
    r = np.sqrt(2.0 + 2.0 * np.sin(x[..., 1] + x[..., 2]) ** 2)
    return np.stack([2.0 - r, np.full_like(r, 2.0), 2.0 + r], axis=-1)


@pytest.fixture
def example() -> SmoothMap:
    return SmoothMap.from_text(EXAMPLE, CUBE)


@pytest.fixture
def euclidean() -> MetricField:
    return MetricField.euclidean()


def test_map_values(example: SmoothMap) -> None:
    """Тест вычисления φ в точке и на массиве."""
    value = example(POINT)

    assert value[2] == pytest.approx(ROOT2 * 0.1 + 0.2)
    assert example(np.stack([POINT, -POINT])).shape == (2, 3)


def test_exact_jacobian(example: SmoothMap) -> None:
    """Тест символьной матрицы Якоби."""
    x2, x3 = POINT[1], POINT[2]
    expected = [
        [0.0, np.sin(x2), ROOT2 * np.cos(x3)],
        [0.0, np.cos(x2), ROOT2 * np.sin(x3)],
        [ROOT2, 1.0, 0.0],
    ]

    np.testing.assert_allclose(jacobian(example, POINT), expected, atol=TOL)


def test_map_texts_roundtrip(example: SmoothMap) -> None:
    """Тест печати компонент отображения."""
    again = SmoothMap.from_text(example.texts(), CUBE)

    np.testing.assert_allclose(again(POINT), example(POINT), atol=TOL)


def test_map_needs_three_components() -> None:
    """Тест: отображение задаётся тремя компонентами."""
    with pytest.raises(InputError):
        SmoothMap.from_text(("x1", "x2"))


def test_outside_box(example: SmoothMap) -> None:
    """Тест: точка вне области отвергается."""
    with pytest.raises(DomainError):
        example(np.array([0.0, 0.0, 0.9]))


def test_expression_domain() -> None:
    """Тест: точка вне области определения выражения."""
    phi = SmoothMap.from_text(("sqrt(x1)", "x2", "x3"))

    with pytest.raises(DomainError):
        phi(np.array([-1.0, 0.0, 0.0]))
    values, bad = phi.evaluate_masked(np.array([[-1.0, 0.0, 0.0], [4.0, 0.0, 0.0]]))
    assert bad.tolist() == [True, False]
    assert values[1, 0] == 2.0


def test_metric_rejects_non_spd() -> None:
    """Тест: метрика должна быть положительно определённой."""
    metric = MetricField.from_text(("1", "2", "0", "1", "0", "1"))

    with pytest.raises(NonPositiveMetricError):
        metric(POINT)


def test_metric_needs_six_coefficients() -> None:
    """Тест: метрика задаётся шестью коэффициентами."""
    with pytest.raises(InputError):
        MetricField.from_text(("1", "0", "1"))


def test_example_spectrum(example: SmoothMap, euclidean: MetricField) -> None:
    """Тест спектра S: 2 − r, 2, 2 + r, r = √(2 + 2sin²(x2 + x3))."""
    data = spectral(example, euclidean, euclidean, POINT)

    np.testing.assert_allclose(data.values, example_values(POINT), atol=EIGEN_TOL)
    for k in (1, 2, 3):
        np.testing.assert_allclose(data.operator @ data.eta(k), data.values[k - 1] * data.eta(k), atol=EIGEN_TOL)
    np.testing.assert_allclose(data.covectors.T @ data.vectors, np.eye(3), atol=TOL)
    assert np.linalg.det(data.covectors) > 0.0


def test_weighted_operator_is_self_adjoint() -> None:
    """Тест: S самосопряжён относительно кометрики g⁻¹, спектр совпадает с касательной формой."""
    phi = SmoothMap.from_text(("x1 + x2^2", "x2 + 0.3*x3", "2*x3 + x1*x2"))
    g = MetricField.from_text(("2", "0.5", "0", "1 + x1^2", "0", "3"))
    h = MetricField.from_text(("1", "0", "0.2", "2", "0", "1"))
    s = s_operator(phi, g, h, POINT)
    cometric = np.linalg.inv(g(POINT))

    weighted = cometric @ s
    np.testing.assert_allclose(weighted, weighted.T, atol=1e-10)

    jac = jacobian(phi, POINT)
    covector = np.sort(np.linalg.eigvals(covector_operator(jac, g(POINT), h(phi(POINT)))).real)
    tangent = np.sort(np.linalg.eigvals(tangent_operator(jac, g(POINT), h(phi(POINT)))).real)
    np.testing.assert_allclose(covector, tangent, rtol=1e-10)


def test_degenerate_map(euclidean: MetricField) -> None:
    """Тест: вырожденный якобиан отвергается."""
    phi = SmoothMap.from_text(("x1^3", "x2", "x3"))

    with pytest.raises(DegenerateMapError):
        s_operator(phi, euclidean, euclidean, np.zeros(3))


def test_repeated_spectrum(euclidean: MetricField) -> None:
    """Тест: тождественное отображение имеет кратный спектр."""
    with pytest.raises(RepeatedEigenvalueError):
        spectral(SmoothMap.identity(), euclidean, euclidean, POINT)


def test_example_frame_field(example: SmoothMap, euclidean: MetricField) -> None:
    """Тест поля кореперов примера: все узлы приняты, знаки согласованы."""
    grid = Grid(CUBE.lower, CUBE.upper, (5, 5, 5))
    frame = frame_field(example, euclidean, euclidean, grid)

    assert frame.masked_count == 0
    assert frame.reason_counts() == {REASON_OK: grid.size}
    assert not frame.holonomy
    assert frame.components == 1
    np.testing.assert_allclose(frame.values, example_values(grid.points()), atol=EIGEN_TOL)
    for axis in range(3):
        here, there = grid.neighbour_pairs(axis)
        dots = np.einsum('...ij,...ij->...j', frame.covectors[here], frame.covectors[there])
        assert np.all(dots > 0.0)
    np.testing.assert_allclose(frame.sqrt_det_g(), 1.0, atol=TOL)


def test_identity_frame_all_masked(euclidean: MetricField) -> None:
    """Тест: изометрия маскирует все узлы как кратный спектр."""
    grid = Grid((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), (3, 3, 3))
    frame = frame_field(SmoothMap.identity(), euclidean, euclidean, grid)

    assert frame.masked_count == grid.size
    assert set(frame.reasons.ravel().tolist()) == {REASON_REPEATED}
    assert np.isnan(frame.covectors).all()
    assert frame.components == 0


def test_masking_reasons(euclidean: MetricField) -> None:
    """Тест причин маскирования: область выражения и метрика."""
    grid = Grid((-1.0, 0.0, 0.0), (1.0, 1.0, 1.0), (5, 3, 3))
    phi = SmoothMap.from_text(("sqrt(x1 + 0.75) + x1", "1.5*x2", "3*x3"))
    frame = frame_field(phi, euclidean, euclidean, grid)

    assert np.all(frame.reasons[0] == REASON_DOMAIN)
    assert np.all(frame.reasons[1:] == REASON_OK)

    g = MetricField.from_text(("x1", "0", "0", "1", "0", "1"))
    frame = frame_field(SmoothMap.from_text(("x1", "2*x2", "3*x3")), g, euclidean, grid)
    assert np.all(frame.reasons[:3] == REASON_METRIC)
    assert frame.masked_count == 3 * 9


def test_frame_from_operators_shape() -> None:
    """Тест: поле операторов должно совпадать с решёткой."""
    grid = Grid((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), (3, 3, 3))

    with pytest.raises(InputError):
        frame_from_operators(grid, np.zeros((3, 3, 3, 3)))


def test_frame_from_constant_operator() -> None:
    """Тест постоянного поля операторов."""
    grid = Grid((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), (3, 3, 3))
    operator = np.broadcast_to(np.diag([3.0, 1.0, 2.0]), (*grid.shape, 3, 3))
    frame = frame_from_operators(grid, operator)

    np.testing.assert_allclose(frame.values[1, 1, 1], [1.0, 2.0, 3.0])
    np.testing.assert_allclose(frame.eta(1)[0, 0, 0], [0.0, 1.0, 0.0])
    assert frame.flips == 0


def test_frame_self_adjoint_tolerance() -> None:
    """Тест: несимметричность оператора сверх self_adjoint_tol отвергается."""
    grid = Grid((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), (3, 3, 3))
    skewed = np.diag([3.0, 1.0, 2.0])
    skewed[0, 1] = 1e-6
    operator = np.broadcast_to(skewed, (*grid.shape, 3, 3))

    with pytest.raises(NotSelfAdjointError):
        frame_from_operators(grid, operator)
    frame = frame_from_operators(grid, operator, self_adjoint_tol=1e-3)
    assert frame.masked_count == 0


def test_leaf_parameter() -> None:
    """Тест: t обозначает координату оси листа."""
    phi = SmoothMap.from_text(("x1", "x2", "t^2"))
    along_x1 = parse_field("3*t", leaf_axis=0)

    assert jacobian(phi, POINT)[2, 2] == pytest.approx(2.0 * POINT[2])
    assert to_text(along_x1) == "3*x1"
