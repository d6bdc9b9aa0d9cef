"""Тесты коэффициента Бельтрами, изотермических карт и голоморфности вдоль листов."""

import math

import numpy as np
import pytest
from geom.beltrami import (
    MODE_FLATTENED,
    MODE_PULLBACK,
    BeltramiField,
    LeafGrid2,
    LeafMetric2,
    affine_start,
    beltrami_coefficient,
    cauchy_riemann,
    cell_wirtinger,
    conductivity,
    extend_mu,
    foliated_isothermal,
    isothermal_verify,
    leaf_axes,
    leafwise_holomorphy,
    metric_gram,
    solve_beltrami,
    stiffness_matrix,
)
from geom.convergence import convergence_order
from geom.errors import BeltramiError, InputError, LeafMixingError, NonPositiveMetricError
from geom.grid import Grid
from geom.pullback import MetricField, SmoothMap

LEAF = LeafGrid2((0.0, 0.0), (1.0, 1.0), (9, 9))
RESIDUAL_TOL = 1e-8
EXACT_TOL = 1e-12
CR_TOL = 1e-6
MIN_ORDER = 1.8
MIN_CR_ORDER = 1.5
LEVELS = (33, 65, 129)


def unit_leaf(n: int) -> LeafGrid2:
    return LeafGrid2((0.0, 0.0), (1.0, 1.0), (n, n))


def varying_metric(grid: LeafGrid2) -> LeafMetric2:
    """E = 1 + x², F = 0.3 sin y, G = 1 + 0.5y: μ меняется по листу."""
    x, y = grid.coordinates()
    return LeafMetric2(grid, 1.0 + x ** 2, 0.3 * np.sin(y), 1.0 + 0.5 * y)


@pytest.fixture
def euclidean() -> MetricField:
    return MetricField.euclidean()


def test_leaf_axes() -> None:
    """Тест осей внутри листа."""
    assert leaf_axes(2) == (0, 1)
    assert leaf_axes(1) == (0, 2)
    with pytest.raises(InputError):
        leaf_axes(3)


def test_leaf_grid_of() -> None:
    """Тест решётки листа, вырезанной из трёхмерной."""
    grid = Grid((0.0, -1.0, 2.0), (1.0, 1.0, 3.0), (5, 9, 3))
    leaf = LeafGrid2.of(grid, 0)

    assert leaf.lower == (-1.0, 2.0)
    assert leaf.shape == (9, 3)
    assert leaf.spacing == pytest.approx((0.25, 0.5))
    assert leaf.refined().shape == (17, 5)
    assert LEAF.index_of((0.25, 0.5)) == (2, 4)


def test_euclidean_mu_vanishes() -> None:
    """Тест: у евклидовой метрики μ = 0."""
    assert beltrami_coefficient(LeafMetric2(LEAF, 1.0, 0.0, 1.0)).sup_abs == 0.0


def test_mu_of_stretched_metric() -> None:
    """Тест: для 4dx² + dy² коэффициент μ = 1/3."""
    field = beltrami_coefficient(LeafMetric2(LEAF, 4.0, 0.0, 1.0))

    np.testing.assert_allclose(field.mu, 1.0 / 3.0)


def test_non_positive_leaf_metric() -> None:
    """Тест: вырожденная метрика листа отвергается."""
    with pytest.raises(NonPositiveMetricError):
        LeafMetric2(LEAF, 1.0, 1.0, 1.0)


def test_conductivity() -> None:
    """Тест матрицы A = √det g⁻¹ метрики |dz + μdz̄|²."""
    np.testing.assert_allclose(conductivity(np.array([0.0 + 0j])), [np.eye(2)])
    np.testing.assert_allclose(conductivity(np.array([1.0 / 3.0 + 0j])), [np.diag([0.5, 2.0])])
    mu = np.array([0.3 + 0.4j, -0.5j, 0.8])
    np.testing.assert_allclose(np.linalg.det(conductivity(mu)), 1.0)


def test_stiffness_annihilates_constants() -> None:
    """Тест: строки матрицы жёсткости в сумме дают ноль, матрица симметрична."""
    x, y = LEAF.coordinates()
    stiffness = stiffness_matrix(0.3 * x + 0.2j * y, LEAF.spacing)

    np.testing.assert_allclose(stiffness @ np.ones(LEAF.size), 0.0, atol=EXACT_TOL)
    assert abs(stiffness - stiffness.T).max() <= EXACT_TOL


def test_extend_mu_keeps_leaf_values() -> None:
    """Тест: продолжение μ не меняет значения на листе и остаётся внутри |μ| < 1."""
    x, y = LEAF.coordinates()
    mu = 0.9 * x * np.exp(1j * y)
    wide = extend_mu(BeltramiField(LEAF, mu), (4, 4))

    assert wide.shape == (17, 17)
    np.testing.assert_array_equal(wide[4:13, 4:13], mu)
    assert np.max(np.abs(wide)) < 1.0
    constant = extend_mu(BeltramiField(LEAF, np.full(LEAF.shape, 0.3 + 0j)), (4, 4))
    np.testing.assert_allclose(constant, 0.3, atol=EXACT_TOL)


def test_solve_identity_chart() -> None:
    """Тест: при μ = 0 решение есть нормированная координата z."""
    solution = solve_beltrami(BeltramiField(LEAF, np.zeros(LEAF.shape, dtype=complex)))
    p0, p1 = solution.anchors

    assert solution.w[p0] == 0.0
    assert solution.w[p1] == 1.0
    np.testing.assert_allclose(solution.w, (LEAF.z() - (0.25 + 0.5j)) / 0.5, atol=RESIDUAL_TOL)
    assert solution.residual <= EXACT_TOL
    assert solution.positive


def test_solve_constant_mu() -> None:
    """Тест: при постоянном μ решение есть z + μz̄ с нормировкой по якорям."""
    metric = LeafMetric2(LEAF, 4.0, 0.0, 1.0)
    solution = solve_beltrami(beltrami_coefficient(metric))
    p0, p1 = solution.anchors

    np.testing.assert_allclose(solution.w, affine_start(LEAF, 1.0 / 3.0, p0, p1), atol=RESIDUAL_TOL)
    check = isothermal_verify(metric, solution)
    assert check.dilatation <= RESIDUAL_TOL
    assert set(check.as_dict()) == {'anisotropy', 'skew', 'dilatation'}


def test_constant_mu_ratio() -> None:
    """Тест: при μ = 0.3 отношение w_z̄/w_z равно 0.3 во всех ячейках."""
    grid = unit_leaf(33)
    solution = solve_beltrami(BeltramiField(grid, np.full(grid.shape, 0.3 + 0j)))
    wz, wzbar = cell_wirtinger(solution.w, grid)

    np.testing.assert_allclose(wzbar / wz, 0.3, atol=RESIDUAL_TOL)


def test_stretched_metric_is_exact() -> None:
    """Тест: метрика 2dx² + dy² выпрямляется точно на всех уровнях."""
    for n in LEVELS:
        grid = unit_leaf(n)
        metric = LeafMetric2(grid, 2.0, 0.0, 1.0)
        check = isothermal_verify(metric, solve_beltrami(beltrami_coefficient(metric)))
        assert check.dilatation <= RESIDUAL_TOL


def test_solve_varying_mu() -> None:
    """Тест: при переменном μ остаток падает ниже остатка аффинной карты и убывает с шагом."""
    checks = []
    for n in (17, 33):
        metric = varying_metric(unit_leaf(n))
        solution = solve_beltrami(beltrami_coefficient(metric))
        assert solution.positive
        assert solution.history[-1] < solution.history[0]
        assert solution.padding == ((n - 1) // 2, (n - 1) // 2)
        checks.append(isothermal_verify(metric, solution))

    assert checks[1].dilatation < checks[0].dilatation / 3.0


def test_varying_mu_second_order() -> None:
    """Тест: изотермическая ошибка при переменном μ убывает со вторым порядком."""
    spacings, errors = [], []
    for n in LEVELS:
        grid = unit_leaf(n)
        metric = varying_metric(grid)
        errors.append(isothermal_verify(metric, solve_beltrami(beltrami_coefficient(metric))).dilatation)
        spacings.append(grid.spacing[0])

    assert errors[0] > errors[1] > errors[2]
    assert convergence_order(spacings, errors) >= MIN_ORDER


def test_solver_rejects_large_mu() -> None:
    """Тест: |μ| выше k_max отвергается."""
    with pytest.raises(BeltramiError, match="k_max"):
        solve_beltrami(BeltramiField(LEAF, np.full(LEAF.shape, 0.95 + 0j)))


def test_solver_rejects_coinciding_anchors() -> None:
    """Тест: якоря должны попадать в разные узлы."""
    with pytest.raises(InputError, match="anchors"):
        solve_beltrami(BeltramiField(LEAF, np.zeros(LEAF.shape, dtype=complex)), anchors=((0.5, 0.5), (0.52, 0.5)))


def test_foliated_euclidean(euclidean: MetricField) -> None:
    """Тест: все листы евклидовой коробки получают одну и ту же карту."""
    grid = Grid((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), (9, 9, 3))
    chart = foliated_isothermal(metric_gram(euclidean, grid), grid)

    assert chart.masked == []
    assert chart.continuity <= RESIDUAL_TOL
    assert chart.w().shape == grid.shape
    assert chart.rows().shape == (grid.size, 6)
    summary = chart.summary()
    assert summary['leaves'] == 3
    assert summary['dilatation_max'] <= RESIDUAL_TOL


def test_foliated_masks_broken_leaf(euclidean: MetricField) -> None:
    """Тест: лист с неопределённой метрикой маскируется, остальные строятся."""
    grid = Grid((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), (9, 9, 3))
    gram = metric_gram(euclidean, grid)
    gram[:, :, 1] = np.nan
    chart = foliated_isothermal(gram, grid)

    assert chart.masked == [1]
    assert np.isnan(chart.w()[:, :, 1]).all()
    assert chart.rows().shape == (2 * 81, 6)


def test_square_is_holomorphic(euclidean: MetricField) -> None:
    """Тест: z ↦ z² голоморфно на листах в сплющенном режиме."""
    grid = Grid((0.5, -0.5, 0.0), (1.5, 0.5, 1.0), (17, 17, 3))
    phi = SmoothMap.from_text(("x1^2 - x2^2", "2*x1*x2", "x3"))
    report = leafwise_holomorphy(phi, euclidean, euclidean, grid, mode=MODE_FLATTENED)

    assert report.orientation == 'holomorphic'
    assert report.residual <= CR_TOL
    assert len(report.leaves) == 3
    assert report.summary()['mode'] == MODE_FLATTENED


def test_exponential_cr_order(euclidean: MetricField) -> None:
    """Тест: остаток Коши–Римана для exp z убывает с порядком не ниже 1.5."""
    phi = SmoothMap.from_text(("exp(x1)*cos(x2)", "exp(x1)*sin(x2)", "x3"))
    spacings, errors = [], []
    for n in (9, 17, 33):
        grid = Grid((0.0, -0.5, 0.0), (1.0, 0.5, 1.0), (n, n, 3))
        report = leafwise_holomorphy(phi, euclidean, euclidean, grid, mode=MODE_FLATTENED)
        assert report.orientation == 'holomorphic'
        spacings.append(grid.spacing[0])
        errors.append(report.residual)

    assert convergence_order(spacings, errors) >= MIN_CR_ORDER


def test_pullback_mode(euclidean: MetricField) -> None:
    """Тест: в режиме pullback карта φ*h сравнивается с картой g на тех же листах."""
    grid = Grid((0.5, -0.5, 0.0), (1.5, 0.5, 1.0), (9, 9, 3))
    phi = SmoothMap.from_text(("x1^2 - x2^2", "2*x1*x2", "x3"))
    report = leafwise_holomorphy(phi, euclidean, euclidean, grid, mode=MODE_PULLBACK)

    assert report.orientation == 'holomorphic'
    assert report.residual <= CR_TOL
    assert report.summary()['mode'] == MODE_PULLBACK


def test_cauchy_riemann_constant_map() -> None:
    """Тест: у постоянного отображения остаток не определён."""
    residual, jacobian = cauchy_riemann(np.full(LEAF.shape, 2.0 + 1.0j), LEAF)

    assert math.isnan(residual)
    assert jacobian == 0.0


def test_conjugation_is_antiholomorphic(euclidean: MetricField) -> None:
    """Тест: z ↦ z̄ на листах антиголоморфно."""
    grid = Grid((0.0, -0.5, 0.0), (1.0, 0.5, 1.0), (9, 9, 3))
    phi = SmoothMap.from_text(("x1", "-x2", "x3"))
    report = leafwise_holomorphy(phi, euclidean, euclidean, grid, mode=MODE_FLATTENED)

    assert report.orientation == 'antiholomorphic'
    assert report.residual <= CR_TOL


def test_leaf_mixing_rejected(euclidean: MetricField) -> None:
    """Тест: отображение, сдвигающее координату листа, отвергается."""
    grid = Grid((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), (5, 5, 3))
    phi = SmoothMap.from_text(("x1", "x2", "x3 + x1"))

    with pytest.raises(LeafMixingError):
        leafwise_holomorphy(phi, euclidean, euclidean, grid)


def test_unknown_mode(euclidean: MetricField) -> None:
    """Тест: неизвестный режим отвергается."""
    grid = Grid((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), (5, 5, 3))

    with pytest.raises(InputError, match="mode"):
        leafwise_holomorphy(SmoothMap.identity(), euclidean, euclidean, grid, mode='sideways')
