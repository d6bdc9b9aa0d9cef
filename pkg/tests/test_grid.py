"""Тесты решёток и дискретных форм."""

import numpy as np
import pytest
from geom.convergence import refinement_study
from geom.errors import InputError
from geom.grid import Grid, SampledForm, connected_components, exterior_derivative

LOWER = (0.0, 0.0, 0.0)
UPPER = (1.0, 2.0, 3.0)
NODES = (5, 5, 5)
DD_TOL = 1e-10
SECOND_ORDER = 2.0
ORDER_TOL = 0.1


@pytest.fixture
def grid() -> Grid:
    return Grid(LOWER, UPPER, NODES)


def test_spacing(grid: Grid) -> None:
    """Тест шага решётки."""
    assert grid.spacing == pytest.approx((0.25, 0.5, 0.75))
    assert grid.h == pytest.approx(0.75)
    assert grid.size == 125


def test_periodic_spacing() -> None:
    """Тест шага на торе: правая граница не входит в узлы."""
    torus = Grid(LOWER, (1.0, 1.0, 1.0), (4, 4, 4), periodic=True)

    assert torus.spacing == pytest.approx((0.25, 0.25, 0.25))
    assert torus.axis(0)[-1] == pytest.approx(0.75)


def test_points_layout(grid: Grid) -> None:
    """Тест раскладки узлов."""
    points = grid.points()

    assert points.shape == (*NODES, 3)
    np.testing.assert_allclose(points[1, 2, 3], [0.25, 1.0, 2.25])


@pytest.mark.parametrize(
    ("lower", "upper", "nodes"),
    [
        (LOWER, UPPER, (2, 5, 5)),
        ((0.0, 1.0, 0.0), (1.0, 1.0, 1.0), NODES),
        ((0.0, 0.0), (1.0, 1.0), (5, 5)),
    ],
)
def test_invalid_grid(lower: tuple, upper: tuple, nodes: tuple) -> None:
    """Тест отказа на вырожденной решётке."""
    with pytest.raises(InputError):
        Grid(lower, upper, nodes)


def test_refined(grid: Grid) -> None:
    """Тест двоичного измельчения."""
    assert grid.refined().shape == (9, 9, 9)
    assert Grid(LOWER, UPPER, (4, 4, 4), periodic=True).refined().shape == (8, 8, 8)
    assert grid.refined().h == pytest.approx(grid.h / 2)


def test_index_of(grid: Grid) -> None:
    """Тест поиска ближайшего узла."""
    assert grid.index_of((0.5, 0.5, 0.5)) == (2, 2, 2)
    assert grid.index_of((0.0, 1.0, 2.0)) == (0, 4, 4)


def test_partial_exact_on_quadratics(grid: Grid) -> None:
    """Тест: разности второго порядка точны на квадратичных полях."""
    x1, x2, x3 = grid.coordinates()
    values = x1 ** 2 + 3.0 * x2 * x3

    np.testing.assert_allclose(grid.partial(values, 0), 2.0 * x1, atol=1e-12)
    np.testing.assert_allclose(grid.gradient(values)[..., 2], 3.0 * x2, atol=1e-12)


def test_periodic_partial_second_order() -> None:
    """Тест: центральные разности на торе сходятся со вторым порядком."""
    spacings, errors = [], []
    for n in (16, 32, 64):
        torus = Grid(LOWER, (1.0, 1.0, 1.0), (n, 3, 3), periodic=True)
        x1, _, _ = torus.coordinates()
        error = np.max(np.abs(torus.partial(np.sin(2 * np.pi * x1), 0) - 2 * np.pi * np.cos(2 * np.pi * x1)))
        spacings.append(torus.spacing[0])
        errors.append(error)

    assert refinement_study(spacings, errors).order == pytest.approx(SECOND_ORDER, abs=ORDER_TOL)


def test_dd_vanishes(grid: Grid) -> None:
    """Тест: d∘d = 0 для 0-форм и 1-форм."""
    x1, x2, x3 = grid.coordinates()
    f = SampledForm(0, np.sin(x1) * x2 ** 2 + np.exp(x3), grid)
    alpha = SampledForm(1, np.stack([x2 * x3, np.cos(x1), x1 * x2 * x3], axis=-1), grid)

    assert f.d().d().sup() <= DD_TOL
    assert alpha.d().d().sup() <= DD_TOL


def test_wedge_degrees(grid: Grid) -> None:
    """Тест внешнего произведения дискретных форм."""
    x1, _, _ = grid.coordinates()
    dx1 = SampledForm(1, np.broadcast_to([1.0, 0.0, 0.0], (*NODES, 3)), grid)
    dx2 = SampledForm(1, np.broadcast_to([0.0, 1.0, 0.0], (*NODES, 3)), grid)
    f = SampledForm(0, x1, grid)

    area = dx1.wedge(dx2)
    assert area.degree == 2
    np.testing.assert_allclose(area.components[0, 0, 0], [0.0, 0.0, 1.0])
    volume = SampledForm(1, np.broadcast_to([0.0, 0.0, 2.0], (*NODES, 3)), grid).wedge(area)
    assert volume.degree == 3
    np.testing.assert_allclose(volume.components, 2.0)
    np.testing.assert_allclose(f.wedge(dx2).components[..., 1], x1)
    with pytest.raises(InputError):
        area.wedge(area)


def test_form_shape_checked(grid: Grid) -> None:
    """Тест проверки формы массива компонент."""
    with pytest.raises(InputError, match="expected"):
        SampledForm(1, np.zeros(NODES), grid)


def test_mask_and_sup(grid: Grid) -> None:
    """Тест: sup игнорирует узлы с NaN."""
    values = np.ones(NODES)
    values[0, 0, 0] = np.nan
    values[1, 1, 1] = 5.0
    form = SampledForm(0, values, grid)

    assert form.mask.sum() == 1
    assert form.sup() == 5.0


def test_d_of_top_form(grid: Grid) -> None:
    """Тест: d 3-формы не определён."""
    with pytest.raises(InputError):
        exterior_derivative(SampledForm(3, np.zeros(NODES), grid))


def test_components_split_by_plane(grid: Grid) -> None:
    """Тест: плоскость маскированных узлов делит решётку на две области."""
    mask = np.ones(grid.shape, dtype=bool)
    mask[2] = False
    labels, count = connected_components(mask, grid)

    assert count == 2
    assert np.all(labels[2] == 0)
    assert labels[0, 0, 0] != labels[4, 0, 0]


def test_components_join_across_seam() -> None:
    """Тест: на периодической решётке области по обе стороны шва совпадают."""
    torus = Grid(LOWER, UPPER, NODES, periodic=True)
    mask = np.ones(torus.shape, dtype=bool)
    mask[2] = False
    labels, count = connected_components(mask, torus)

    assert count == 1
    assert labels[0, 0, 0] == labels[4, 0, 0] == 1
