"""Тесты пары ω± и сертификатов конформности."""

from types import SimpleNamespace

import numpy as np
import pytest
from geom.conformal_cert import (
    BAND_FAIL,
    BAND_INDETERMINATE,
    BAND_PASS,
    CERT_TOL,
    SAMPLE_DIRECTIONS,
    VERDICT_CONFORMAL,
    VERDICT_MASKED,
    a_op,
    a_op_expanded,
    band,
    certify,
    certify_frame,
    omega_pm,
    sample_offset,
    sign_changes,
)
from geom.errors import NonUnitCovectorError, RepeatedEigenvalueError
from geom.grid import Grid
from geom.pullback import Box, MetricField, SmoothMap, frame_field, spectral

EXAMPLE = ("-cos(x2) + sqrt(2)*sin(x3)", "sin(x2) - sqrt(2)*cos(x3)", "sqrt(2)*x1 + x2")
CUBE = Box((-0.5, -0.5, -0.5), (0.5, 0.5, 0.5))
NODES = (5, 5, 5)
DX3 = np.array([0.0, 0.0, 1.0])
TOL = 1e-12
RANDOM_CASES = 50
RANDOM_NODES = (3, 3, 3)


@pytest.fixture(scope='module')
def example_frame():
    euclidean = MetricField.euclidean()
    grid = Grid(CUBE.lower, CUBE.upper, NODES)
    return frame_field(SmoothMap.from_text(EXAMPLE, CUBE), euclidean, euclidean, grid)


def test_omega_pm_coefficients() -> None:
    """Тест коэффициентов c₁ = √((λ₂−λ₁)/(λ₃−λ₁)), c₃ = √((λ₃−λ₂)/(λ₃−λ₁))."""
    spectra = SimpleNamespace(values=np.array([1.0, 2.0, 4.0]), covectors=np.eye(3))
    pair = omega_pm(spectra)

    assert float(pair.c1) == pytest.approx(np.sqrt(1.0 / 3.0))
    assert float(pair.c3) == pytest.approx(np.sqrt(2.0 / 3.0))
    assert float(pair.c1 ** 2 + pair.c3 ** 2) == pytest.approx(1.0)
    np.testing.assert_allclose(pair.plus, [pair.c1, 0.0, pair.c3], atol=TOL)
    np.testing.assert_allclose(pair.minus, [pair.c1, 0.0, -pair.c3], atol=TOL)


def test_omega_pm_needs_simple_spectrum() -> None:
    """Тест: при кратном спектре пара ω± не определена."""
    spectra = SimpleNamespace(values=np.array([1.0, 1.0, 2.0]), covectors=np.eye(3))

    with pytest.raises(RepeatedEigenvalueError):
        omega_pm(spectra)


def test_band() -> None:
    """Тест полос: проходит, не решено, не проходит."""
    bands = band(np.array([1e-9, 5e-8, 1e-6]))

    assert bands.tolist() == [BAND_PASS, BAND_INDETERMINATE, BAND_FAIL]
    assert band(np.array([5e-8]), tol=1e-7).tolist() == [BAND_PASS]


def test_sample_offset_reproducible() -> None:
    """Тест: поворот направлений определяется зерном."""
    first = sample_offset(7, SAMPLE_DIRECTIONS)

    assert first == sample_offset(7, SAMPLE_DIRECTIONS)
    assert 0.0 <= first < 2.0 * np.pi / SAMPLE_DIRECTIONS


def test_a_op_expansion() -> None:
    """Тест: [S, Rot(ω)] совпадает с B + ∗ι(ω)B + B∗ι(ω)."""
    s = np.array([[3.0, 0.5, 0.1], [0.5, 2.0, 0.2], [0.1, 0.2, 1.0]])
    omega = np.array([1.0, 2.0, 2.0]) / 3.0

    np.testing.assert_allclose(a_op(s, omega), a_op_expanded(s, omega), atol=TOL)


@pytest.mark.parametrize("which", ['plus', 'minus'])
def test_example_pair_is_conformal(example_frame, which: str) -> None:
    """Тест: пример конформен на ker ω₊ и на ker ω₋ во всех узлах."""
    omega = getattr(omega_pm(example_frame), which)
    cert = certify_frame(example_frame, omega)

    assert cert.overall == VERDICT_CONFORMAL
    assert cert.count(VERDICT_CONFORMAL) == example_frame.grid.size
    assert cert.disagreements == 0
    summary = cert.summary()
    assert summary['condition2_max'] < CERT_TOL
    assert summary['condition3_max'] < CERT_TOL
    assert summary['sampled_max'] < CERT_TOL
    np.testing.assert_allclose(cert.orthogonality, 0.0, atol=1e-10)


def test_coordinate_plane_not_conformal() -> None:
    """Тест: на ker dx3 пример не конформен, эллипс с осями 2 ± √2."""
    euclidean = MetricField.euclidean()
    grid = Grid(CUBE.lower, CUBE.upper, NODES)
    cert = certify(SmoothMap.from_text(EXAMPLE, CUBE), euclidean, euclidean, DX3, grid, seed=3)

    assert cert.count(VERDICT_CONFORMAL) == 0
    assert np.all(cert.bands['sampled'] == BAND_FAIL)
    assert cert.overall != VERDICT_CONFORMAL
    assert cert.seed == 3


def test_certificate_seed_independent(example_frame) -> None:
    """Тест: вердикт не зависит от поворота направлений."""
    omega = omega_pm(example_frame).minus

    first = certify_frame(example_frame, omega, seed=1)
    second = certify_frame(example_frame, omega, seed=2)
    np.testing.assert_array_equal(first.verdict, second.verdict)


def test_masked_frame() -> None:
    """Тест: на изометрии все узлы замаскированы."""
    euclidean = MetricField.euclidean()
    grid = Grid((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), (3, 3, 3))
    frame = frame_field(SmoothMap.identity(), euclidean, euclidean, grid)
    cert = certify_frame(frame, DX3)

    assert cert.overall == VERDICT_MASKED
    assert cert.count(VERDICT_MASKED) == grid.size
    assert np.isnan(cert.condition2).all()
    assert cert.summary()['condition2_max'] == 0.0


def test_zero_covector_rejected(example_frame) -> None:
    """Тест: нулевой ω отвергается."""
    with pytest.raises(NonUnitCovectorError):
        certify_frame(example_frame, np.zeros(3))


@pytest.mark.parametrize(('periodic', 'expected'), [(False, 25), (True, 50)])
def test_sign_changes_across_seam(periodic: bool, expected: int) -> None:
    """Тест: на торе смена знака через шов тоже считается."""
    grid = Grid((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), NODES, periodic=periodic)
    x1, _, _ = grid.coordinates()
    mu = np.where(np.arange(5)[:, None, None] < 2, 1.0, -1.0) * np.ones_like(x1)

    assert sign_changes(mu, np.ones(grid.shape, dtype=bool), grid) == expected


def test_example_operator_at_origin() -> None:
    """Тест: в начале координат ω₊ = dx2 и A(ω₊) = √2·[[0,1,0],[−1,0,1],[0,1,0]], A(ω±)³ = 0."""
    euclidean = MetricField.euclidean()
    data = spectral(SmoothMap.from_text(EXAMPLE, CUBE), euclidean, euclidean, np.zeros(3))
    pair = omega_pm(data)

    np.testing.assert_allclose(pair.plus, [0.0, 1.0, 0.0], atol=1e-10)
    a_plus = a_op(data.operator, pair.plus)
    expected = np.sqrt(2.0) * np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
    np.testing.assert_allclose(a_plus, expected, atol=1e-10)
    np.testing.assert_allclose(a_plus @ a_plus @ a_plus, 0.0, atol=TOL)
    a_minus = a_op(data.operator, pair.minus)
    np.testing.assert_allclose(a_minus @ a_minus @ a_minus, 0.0, atol=TOL)


def _number(value: float) -> str:
    return f"({value:.17g})"


def _random_instance(rng: np.random.Generator) -> tuple[SmoothMap, MetricField, MetricField]:
    linear = 2.0 * np.eye(3) + 0.2 * rng.standard_normal((3, 3))
    quadratic = 0.05 * rng.standard_normal(3)
    components = [
        " + ".join(f"{_number(linear[i, j])}*x{j + 1}" for j in range(3)) + f" + {_number(quadratic[i])}*x{i + 1}^2"
        for i in range(3)
    ]
    metrics = []
    for _ in range(2):
        root = np.eye(3) + 0.3 * rng.standard_normal((3, 3))
        gram = root @ root.T + 0.5 * np.eye(3)
        metrics.append(MetricField.from_text([_number(gram[i, j]) for i, j in
                                              ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))]))
    return SmoothMap.from_text(components, CUBE), metrics[0], metrics[1]


def test_random_instances_conditions_agree() -> None:
    """Тест на случайных отображениях и метриках: условия согласны, ω± конформны."""
    rng = np.random.default_rng(20240)
    grid = Grid(CUBE.lower, CUBE.upper, RANDOM_NODES)
    checked = 0
    for _ in range(RANDOM_CASES):
        phi, g, h = _random_instance(rng)
        frame = frame_field(phi, g, h, grid)
        valid = int(np.count_nonzero(frame.valid))
        pair = omega_pm(frame)
        for omega in (pair.plus, pair.minus):
            cert = certify_frame(frame, omega)
            assert cert.disagreements == 0
            assert cert.count(VERDICT_CONFORMAL) == valid
        generic = certify_frame(frame, rng.standard_normal(3))
        assert generic.count(VERDICT_CONFORMAL) == 0
        checked += valid

    assert checked > RANDOM_CASES * grid.size // 2
