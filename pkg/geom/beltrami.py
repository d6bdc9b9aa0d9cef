"""Beltrami coefficients, discrete quasiconformal charts and leafwise holomorphy.

Each leaf x_t = const of a 3D grid carries the induced 2D metric
E dx² + 2F dx dy + G dy². Its isothermal chart w solves the Beltrami equation
w_z̄ = μ w_z. The leaf grid is padded, μ is carried smoothly onto the padding,
and w = u + iv comes from two finite-element solves for the harmonic
coordinate u and its conjugate v. Two anchors fix w(p₀) = 0 and w(p₁) = 1.
"""

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import numpy.typing as npt
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator, griddata
from scipy.sparse.linalg import spsolve

from .errors import BeltramiError, InputError, LeafMixingError, NonPositiveMetricError, SolverConvergenceError
from .grid import DIMENSION, MIN_NODES, Grid
from .pullback import LEAF_AXIS, MetricField, SmoothMap
from .tensor3 import FloatArray

ComplexArray = npt.NDArray[np.complex128]

K_MAX = 0.9
SOLVER_RTOL = 1e-10
NEWTON_STEPS = 2
LEAF_TOL = 1e-9
DEFAULT_ANCHORS = ((0.25, 0.5), (0.75, 0.5))

MODE_FLATTENED = 'flattened'
MODE_PULLBACK = 'pullback'
MODES = (MODE_FLATTENED, MODE_PULLBACK)


@dataclass(frozen=True)
class LeafGrid2:
    """Равномерная решётка на листе; индексация 'ij', ось x первая."""

    lower: tuple[float, float]
    upper: tuple[float, float]
    shape: tuple[int, int]

    def __post_init__(self) -> None:
        for lo, hi, n in zip(self.lower, self.upper, self.shape):
            if not hi > lo:
                raise InputError(f"empty leaf axis [{lo}, {hi}]")
            if n < MIN_NODES:
                raise InputError(f"leaf axis needs at least {MIN_NODES} nodes, got {n}")

    @classmethod
    def of(cls, grid: Grid, leaf_axis: int = LEAF_AXIS) -> "LeafGrid2":
        a, b = leaf_axes(leaf_axis)
        return cls((grid.lower[a], grid.lower[b]), (grid.upper[a], grid.upper[b]), (grid.shape[a], grid.shape[b]))

    @property
    def spacing(self) -> tuple[float, float]:
        return (
            (self.upper[0] - self.lower[0]) / (self.shape[0] - 1),
            (self.upper[1] - self.lower[1]) / (self.shape[1] - 1),
        )

    @property
    def size(self) -> int:
        return self.shape[0] * self.shape[1]

    def axis(self, k: int) -> FloatArray:
        return np.linspace(self.lower[k], self.upper[k], self.shape[k])

    def coordinates(self) -> tuple[FloatArray, FloatArray]:
        x, y = np.meshgrid(self.axis(0), self.axis(1), indexing='ij')
        return x, y

    def z(self) -> ComplexArray:
        x, y = self.coordinates()
        return x + 1j * y

    def refined(self) -> "LeafGrid2":
        return LeafGrid2(self.lower, self.upper, (2 * self.shape[0] - 1, 2 * self.shape[1] - 1))

    def index_of(self, fractions: tuple[float, float]) -> tuple[int, int]:
        i = int(np.clip(round(fractions[0] * (self.shape[0] - 1)), 0, self.shape[0] - 1))
        j = int(np.clip(round(fractions[1] * (self.shape[1] - 1)), 0, self.shape[1] - 1))
        return i, j


def leaf_axes(leaf_axis: int) -> tuple[int, int]:
    """Оси внутри листа в порядке возрастания."""
    if leaf_axis not in range(DIMENSION):
        raise InputError(f"leaf axis must be 0, 1 or 2, got {leaf_axis}")
    a, b = (k for k in range(DIMENSION) if k != leaf_axis)
    return a, b


@dataclass(frozen=True)
class LeafMetric2:
    """Метрика E dx² + 2F dx dy + G dy² на решётке листа."""

    grid: LeafGrid2
    E: FloatArray
    F: FloatArray
    G: FloatArray

    def __post_init__(self) -> None:
        for name in ('E', 'F', 'G'):
            values = np.broadcast_to(np.asarray(getattr(self, name), dtype=np.float64), self.grid.shape)
            object.__setattr__(self, name, values)
        if not (np.all(self.E > 0.0) and np.all(self.determinant > 0.0)):
            raise NonPositiveMetricError("leaf metric needs E > 0 and EG − F² > 0")

    @property
    def determinant(self) -> FloatArray:
        return self.E * self.G - self.F * self.F

    @classmethod
    def from_gram(cls, grid: LeafGrid2, gram: FloatArray) -> "LeafMetric2":
        return cls(grid, gram[..., 0, 0], gram[..., 0, 1], gram[..., 1, 1])


@dataclass(frozen=True)
class BeltramiField:
    grid: LeafGrid2
    mu: ComplexArray

    @property
    def sup_abs(self) -> float:
        return float(np.max(np.abs(self.mu)))


def beltrami_coefficient(metric: LeafMetric2) -> BeltramiField:
    """μ = (E − G + 2iF)/(E + G + 2√(EG − F²)); |μ| < 1 проверяется."""
    mu = (metric.E - metric.G + 2j * metric.F) / (metric.E + metric.G + 2.0 * np.sqrt(metric.determinant))
    if np.any(np.abs(mu) >= 1.0):
        raise BeltramiError("|μ| reached 1 on a positive definite metric")
    return BeltramiField(metric.grid, mu)


# Решатель

PAD_FRACTION = 0.5
MIN_PAD = 4
BLEND_FRACTION = 0.75
GAUSS = 0.5 + np.array([-0.5, 0.5]) / np.sqrt(3.0)


def _difference_matrix(n: int, step: float) -> sp.csr_matrix:
    """Центральные разности внутри, односторонние второго порядка на краях."""
    d = sp.diags([-np.ones(n - 1), np.ones(n - 1)], [-1, 1], shape=(n, n), format='lil')
    d[0, :3] = [-3.0, 4.0, -1.0]
    d[n - 1, n - 3:] = [1.0, -4.0, 3.0]
    return d.tocsr() * (0.5 / step)


def wirtinger_operators(grid: LeafGrid2) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Разностные ∂/∂z и ∂/∂z̄ на сплющенных полях решётки листа."""
    nx, ny = grid.shape
    hx, hy = grid.spacing
    dx = sp.kron(_difference_matrix(nx, hx), sp.identity(ny), format='csr')
    dy = sp.kron(sp.identity(nx), _difference_matrix(ny, hy), format='csr')
    return 0.5 * (dx - 1j * dy), 0.5 * (dx + 1j * dy)


def cell_average(values: npt.NDArray) -> npt.NDArray:
    """Среднее по четырём углам каждой ячейки."""
    return 0.25 * (values[:-1, :-1] + values[1:, :-1] + values[:-1, 1:] + values[1:, 1:])


def cell_gradient(w: ComplexArray, grid: LeafGrid2) -> tuple[ComplexArray, ComplexArray]:
    """∂w/∂x и ∂w/∂y в центрах ячеек."""
    hx, hy = grid.spacing
    wx = 0.5 * ((w[1:, :-1] - w[:-1, :-1]) + (w[1:, 1:] - w[:-1, 1:])) / hx
    wy = 0.5 * ((w[:-1, 1:] - w[:-1, :-1]) + (w[1:, 1:] - w[1:, :-1])) / hy
    return wx, wy


def cell_wirtinger(w: ComplexArray, grid: LeafGrid2) -> tuple[ComplexArray, ComplexArray]:
    wx, wy = cell_gradient(w, grid)
    return 0.5 * (wx - 1j * wy), 0.5 * (wx + 1j * wy)


@dataclass
class QuasiconformalSolution:
    """Дискретное решение уравнения Бельтрами с двумя закреплёнными узлами.

    residual и jacobian считаются в центрах ячеек, как в isothermal_verify.
    """

    grid: LeafGrid2
    mu: ComplexArray
    w: ComplexArray
    residual: float
    residual_l2: float
    jacobian: FloatArray
    anchors: tuple[tuple[int, int], tuple[int, int]]
    padding: tuple[int, int]
    history: list[float] = field(default_factory=list)

    @property
    def jacobian_min(self) -> float:
        return float(np.min(self.jacobian))

    @property
    def positive(self) -> bool:
        return self.jacobian_min > 0.0

    def pointwise_residual(self) -> FloatArray:
        """|w_z̄ − μw_z| в узлах, центральными разностями."""
        dz, dzbar = wirtinger_operators(self.grid)
        w = self.w.ravel()
        return np.abs(dzbar @ w - self.mu.ravel() * (dz @ w)).reshape(self.grid.shape)


def affine_start(grid: LeafGrid2, mu: complex, p0: tuple[int, int], p1: tuple[int, int]) -> ComplexArray:
    """Аффинное решение z + μz̄ для постоянного μ, нормированное по якорям."""
    zeta = grid.z()
    zeta = zeta + mu * np.conj(zeta)
    return (zeta - zeta[p0]) / (zeta[p1] - zeta[p0])


def beltrami_residual(w: ComplexArray, mu: ComplexArray, grid: LeafGrid2) -> tuple[FloatArray, FloatArray]:
    """|w_z̄ − μw_z| и якобиан |w_z|² − |w_z̄|² по ячейкам."""
    wz, wzbar = cell_wirtinger(w, grid)
    return np.abs(wzbar - cell_average(mu) * wz), np.abs(wz) ** 2 - np.abs(wzbar) ** 2


def _blend(s: FloatArray) -> FloatArray:
    """1 − (10r³ − 15r⁴ + 6r⁵): гладкий спуск от 1 к 0 с нулевыми производными на концах."""
    r = np.clip(s, 0.0, 1.0)
    return 1.0 - r ** 3 * (10.0 - 15.0 * r + 6.0 * r * r)


def _extend_axis0(values: ComplexArray, pad: int, far: complex) -> ComplexArray:
    """Продолжить поле за края оси 0 касательной прямой, сведённой к константе far."""
    s = np.arange(1, pad + 1, dtype=np.float64).reshape(-1, *([1] * (values.ndim - 1)))
    weight = _blend(s / (BLEND_FRACTION * pad))
    low_slope = 0.5 * (-3.0 * values[0] + 4.0 * values[1] - values[2])
    high_slope = 0.5 * (3.0 * values[-1] - 4.0 * values[-2] + values[-3])
    low = far + (values[0] - s * low_slope - far) * weight
    high = far + (values[-1] + s * high_slope - far) * weight
    return np.concatenate([low[::-1], values, high], axis=0)


def extend_mu(beltrami: BeltramiField, pad: tuple[int, int]) -> ComplexArray:
    """μ на расширенной решётке: C¹-продолжение к среднему значению, |μ| < 1.

    Внутри листа значения не меняются.
    """
    mu = np.asarray(beltrami.mu, dtype=np.complex128)
    far = complex(np.mean(mu))
    wide = _extend_axis0(mu, pad[0], far)
    wide = _extend_axis0(wide.T, pad[1], far).T
    inner = beltrami.sup_abs
    cap = 0.5 * (1.0 + inner)
    size = np.abs(wide)
    squeezed = np.where(size <= inner, size, inner + (cap - inner) * np.tanh((size - inner) / (cap - inner)))
    scale = np.divide(squeezed, size, out=np.ones_like(size), where=size > 0.0)
    return wide * scale


def conductivity(mu: ComplexArray) -> FloatArray:
    """A = √det g⁻¹ для метрики |dz + μdz̄|²; det A = 1."""
    q = 1.0 - np.abs(mu) ** 2
    a11 = np.abs(1.0 - mu) ** 2 / q
    a22 = np.abs(1.0 + mu) ** 2 / q
    a12 = -2.0 * mu.imag / q
    return np.stack([np.stack([a11, a12], axis=-1), np.stack([a12, a22], axis=-1)], axis=-2)


def stiffness_matrix(mu: ComplexArray, spacing: tuple[float, float]) -> sp.csr_matrix:
    """Матрица ∫A∇φᵢ·∇φⱼ билинейных элементов, квадратура Гаусса 2×2."""
    nx, ny = mu.shape
    hx, hy = spacing
    xi, eta = (axis.ravel() for axis in np.meshgrid(GAUSS, GAUSS, indexing='ij'))
    shape = np.stack([(1 - xi) * (1 - eta), xi * (1 - eta), (1 - xi) * eta, xi * eta], axis=-1)
    grad = np.stack([
        np.stack([-(1 - eta) / hx, (1 - eta) / hx, -eta / hx, eta / hx], axis=-1),
        np.stack([-(1 - xi) / hy, -xi / hy, (1 - xi) / hy, xi / hy], axis=-1),
    ], axis=-1)
    corners = np.stack([mu[:-1, :-1], mu[1:, :-1], mu[:-1, 1:], mu[1:, 1:]], axis=-1)
    coefficient = conductivity(corners @ shape.T)
    local = 0.25 * hx * hy * np.einsum('qai,xyqij,qbj->xyab', grad, coefficient, grad)
    index = np.arange(nx * ny).reshape(nx, ny)
    nodes = np.stack([index[:-1, :-1], index[1:, :-1], index[:-1, 1:], index[1:, 1:]], axis=-1)
    rows = np.broadcast_to(nodes[..., :, None], local.shape)
    cols = np.broadcast_to(nodes[..., None, :], local.shape)
    return sp.coo_matrix((local.ravel(), (rows.ravel(), cols.ravel())), shape=(nx * ny, nx * ny)).tocsr()


def _solve(matrix: sp.csr_matrix, rhs: FloatArray, rtol: float, name: str) -> FloatArray:
    solution = spsolve(matrix.tocsc(), rhs)
    scale = max(float(np.linalg.norm(rhs)), np.finfo(np.float64).tiny)
    misfit = float(np.linalg.norm(matrix @ solution - rhs)) / scale
    if not np.all(np.isfinite(solution)) or misfit > rtol:
        raise SolverConvergenceError(f"{name} solve left relative residual {misfit:.3e} (rtol {rtol:.1e})")
    return solution


def solve_beltrami(
    beltrami: BeltramiField,
    *,
    anchors: Sequence[tuple[float, float]] = DEFAULT_ANCHORS,
    k_max: float = K_MAX,
    rtol: float = SOLVER_RTOL,
) -> QuasiconformalSolution:
    """Решить w_z̄ = μw_z на листе с нормировкой w(p₀) = 0, w(p₁) = 1.

    μ продолжается на решётку, расширенную на PAD_FRACTION с каждой
    стороны. Там w = u + iv: u решает div(A∇u) = 0 с u = x на границе,
    v решает ту же задачу с потоком A∇v·n = −∂u/∂τ, так что ∇v = J A∇u
    с поворотом J на 90°. Обе задачи собираются билинейными элементами и
    решаются прямым методом.
    """
    grid = beltrami.grid
    if beltrami.sup_abs > k_max:
        raise BeltramiError(f"sup|μ| = {beltrami.sup_abs:.4f} exceeds k_max = {k_max}")
    p0 = grid.index_of(anchors[0])
    p1 = grid.index_of(anchors[1])
    if p0 == p1:
        raise InputError(f"anchors coincide at node {p0}")

    pad = (max(MIN_PAD, round(PAD_FRACTION * (grid.shape[0] - 1))),
           max(MIN_PAD, round(PAD_FRACTION * (grid.shape[1] - 1))))
    hx, hy = grid.spacing
    wide = LeafGrid2(
        (grid.lower[0] - pad[0] * hx, grid.lower[1] - pad[1] * hy),
        (grid.upper[0] + pad[0] * hx, grid.upper[1] + pad[1] * hy),
        (grid.shape[0] + 2 * pad[0], grid.shape[1] + 2 * pad[1]),
    )
    stiffness = stiffness_matrix(extend_mu(beltrami, pad), wide.spacing)
    x, _ = wide.coordinates()

    boundary = np.zeros(wide.shape, dtype=bool)
    boundary[[0, -1], :] = True
    boundary[:, [0, -1]] = True
    inner = ~boundary.ravel()
    u = x.ravel().copy()
    u[inner] = _solve(
        stiffness[inner][:, inner], -(stiffness[inner][:, ~inner] @ u[~inner]), rtol, "harmonic coordinate"
    )

    edge = np.full(wide.shape[0], wide.spacing[0])
    edge[[0, -1]] *= 0.5
    flux = np.zeros(wide.shape)
    flux[:, 0] -= edge
    flux[:, -1] += edge
    v = np.zeros(wide.size)
    v[1:] = _solve(stiffness[1:, 1:], flux.ravel()[1:], rtol, "conjugate coordinate")

    w = (u + 1j * v).reshape(wide.shape)[pad[0]:pad[0] + grid.shape[0], pad[1]:pad[1] + grid.shape[1]]
    w = (w - w[p0]) / (w[p1] - w[p0])
    pointwise, jacobian = beltrami_residual(w, beltrami.mu, grid)
    start, _ = beltrami_residual(affine_start(grid, complex(np.mean(beltrami.mu)), p0, p1), beltrami.mu, grid)
    return QuasiconformalSolution(
        grid=grid,
        mu=beltrami.mu,
        w=w,
        residual=float(np.max(pointwise)),
        residual_l2=float(np.sqrt(np.sum(pointwise ** 2) * hx * hy)),
        jacobian=jacobian,
        anchors=(p0, p1),
        padding=pad,
        history=[float(np.max(start)), float(np.max(pointwise))],
    )


@dataclass(frozen=True)
class IsothermalResidual:
    """Отклонение метрики в координатах w от вида λ(du² + dv²) по ячейкам."""

    anisotropy: float
    skew: float
    dilatation: float
    lam: FloatArray

    def as_dict(self) -> dict[str, float]:
        return {'anisotropy': self.anisotropy, 'skew': self.skew, 'dilatation': self.dilatation}


def isothermal_verify(metric: LeafMetric2, solution: QuasiconformalSolution) -> IsothermalResidual:
    """Перенести метрику в координаты w конгруэнцией J⁻ᵀGJ⁻¹ в центрах ячеек.

    Только ``dilatation`` не зависит от поворота w ↦ e^{iθ}w.
    """
    wx, wy = cell_gradient(solution.w, metric.grid)
    jac = np.stack([np.stack([wx.real, wy.real], axis=-1), np.stack([wx.imag, wy.imag], axis=-1)], axis=-2)
    det = np.linalg.det(jac)
    if np.any(det <= 0.0):
        raise BeltramiError(f"chart Jacobian is not positive on {int(np.count_nonzero(det <= 0.0))} cell(s)")
    e, f, g = cell_average(metric.E), cell_average(metric.F), cell_average(metric.G)
    gram = np.stack([np.stack([e, f], axis=-1), np.stack([f, g], axis=-1)], axis=-2)
    inverse = np.linalg.inv(jac)
    pushed = np.swapaxes(inverse, -1, -2) @ gram @ inverse
    e2, f2, g2 = pushed[..., 0, 0], pushed[..., 0, 1], pushed[..., 1, 1]
    trace = e2 + g2
    return IsothermalResidual(
        anisotropy=float(np.max(np.abs(e2 - g2) / trace)),
        skew=float(np.max(np.abs(f2) / trace)),
        dilatation=float(np.max(np.sqrt((e2 - g2) ** 2 + 4.0 * f2 ** 2) / trace)),
        lam=0.5 * trace,
    )


# Слоения

@dataclass
class FoliatedChart:
    """Изотермические карты всех листов x_t = const с общими якорями."""

    grid: Grid
    leaf_axis: int
    leaf: LeafGrid2
    t: FloatArray
    solutions: list[QuasiconformalSolution | None]
    metrics: list[LeafMetric2 | None]
    isothermal: list[IsothermalResidual | None]
    continuity: float
    log: list[str] = field(default_factory=list)

    @property
    def masked(self) -> list[int]:
        return [i for i, s in enumerate(self.solutions) if s is None]

    def w(self) -> ComplexArray:
        """w на всей решётке; замаскированные листы заполнены NaN."""
        leaves = [s.w if s is not None else np.full(self.leaf.shape, np.nan + 0j) for s in self.solutions]
        return np.stack(leaves, axis=self.leaf_axis)

    def rows(self) -> FloatArray:
        """Строки x, y, t, re_w, im_w, residual по всем узлам немаскированных листов."""
        x, y = self.leaf.coordinates()
        blocks = []
        for t, solution in zip(self.t, self.solutions):
            if solution is None:
                continue
            blocks.append(np.column_stack([
                x.ravel(),
                y.ravel(),
                np.full(x.size, t),
                solution.w.real.ravel(),
                solution.w.imag.ravel(),
                solution.pointwise_residual().ravel(),
            ]))
        return np.vstack(blocks) if blocks else np.empty((0, 6))

    def summary(self) -> dict[str, object]:
        accepted = [s for s in self.solutions if s is not None]
        checks = [r for r in self.isothermal if r is not None]
        return {
            'leaves': len(self.solutions),
            'masked_leaves': self.masked,
            'continuity_modulus': self.continuity,
            'beltrami_residual_max': max((s.residual for s in accepted), default=0.0),
            'jacobian_min': min((s.jacobian_min for s in accepted), default=0.0),
            'anisotropy_max': max((r.anisotropy for r in checks), default=0.0),
            'skew_max': max((r.skew for r in checks), default=0.0),
            'dilatation_max': max((r.dilatation for r in checks), default=0.0),
        }


def metric_gram(metric: MetricField, grid: Grid) -> FloatArray:
    """Матрицы Грама метрики в узлах решётки; неопределённые узлы заполнены NaN."""
    gram, _ = metric.evaluate_masked(grid.points())
    return gram


def pullback_gram(phi: SmoothMap, h: MetricField, grid: Grid) -> FloatArray:
    """Грам метрики φ*h = Jᵀ H(φ) J на исходной решётке."""
    points = grid.points()
    jac, bad_jac = phi.jacobian_masked(points)
    images, bad_image = phi.evaluate_masked(points)
    gram_h, bad_h = h.evaluate_masked(np.where(bad_image[..., None], points, images))
    gram = np.swapaxes(jac, -1, -2) @ gram_h @ jac
    bad = bad_jac | bad_image | bad_h
    return np.where(bad[..., None, None], np.nan, gram)


def foliated_isothermal(
    gram: FloatArray,
    grid: Grid,
    *,
    leaf_axis: int = LEAF_AXIS,
    anchors: Sequence[tuple[float, float]] = DEFAULT_ANCHORS,
    k_max: float = K_MAX,
    rtol: float = SOLVER_RTOL,
) -> FoliatedChart:
    """Изотермические карты листов x_t = const для поля Грама на 3D решётке.

    Лист, на котором метрика вырождена или решатель не сошёлся,
    маскируется; карта остальных листов строится.
    """
    a, b = leaf_axes(leaf_axis)
    leaf = LeafGrid2.of(grid, leaf_axis)
    block = np.asarray(gram, dtype=np.float64)[..., [a, b], :][..., :, [a, b]]
    solutions: list[QuasiconformalSolution | None] = []
    metrics: list[LeafMetric2 | None] = []
    checks: list[IsothermalResidual | None] = []
    log = []
    for index in range(grid.shape[leaf_axis]):
        try:
            metric = LeafMetric2.from_gram(leaf, np.take(block, index, axis=leaf_axis))
            solution = solve_beltrami(beltrami_coefficient(metric), anchors=anchors, k_max=k_max, rtol=rtol)
            check = isothermal_verify(metric, solution)
        except (BeltramiError, InputError) as exc:
            log.append(f"leaf {index} masked: {exc}")
            solutions.append(None)
            metrics.append(None)
            checks.append(None)
            continue
        if not solution.positive:
            log.append(f"leaf {index}: chart Jacobian not positive (min {solution.jacobian_min:.3e})")
        solutions.append(solution)
        metrics.append(metric)
        checks.append(check)

    continuity = 0.0
    for first, second in zip(solutions, solutions[1:]):
        if first is not None and second is not None:
            continuity = max(continuity, float(np.max(np.abs(second.w - first.w))))
    log.append(f"{len(solutions) - len([s for s in solutions if s is None])} of {len(solutions)} leaves charted")
    return FoliatedChart(
        grid=grid,
        leaf_axis=leaf_axis,
        leaf=leaf,
        t=grid.axis(leaf_axis),
        solutions=solutions,
        metrics=metrics,
        isothermal=checks,
        continuity=continuity,
        log=log,
    )


# Голоморфность вдоль листов

def invert_chart(w: ComplexArray, leaf: LeafGrid2, targets: ComplexArray) -> ComplexArray:
    """z = w⁻¹(ζ): линейная интерполяция по триангуляции и шаги Ньютона по билинейной ячейке.

    Точки вне образа получают NaN.
    """
    x, y = leaf.coordinates()
    samples = np.column_stack([w.real.ravel(), w.imag.ravel()])
    query = np.column_stack([targets.real.ravel(), targets.imag.ravel()])
    guess_x = griddata(samples, x.ravel(), query, method='linear')
    guess_y = griddata(samples, y.ravel(), query, method='linear')
    inside = np.isfinite(guess_x) & np.isfinite(guess_y)
    px, py = np.where(inside, guess_x, leaf.lower[0]), np.where(inside, guess_y, leaf.lower[1])
    hx, hy = leaf.spacing
    goal = targets.ravel()
    for _ in range(NEWTON_STEPS):
        i = np.clip(np.floor((px - leaf.lower[0]) / hx).astype(int), 0, leaf.shape[0] - 2)
        j = np.clip(np.floor((py - leaf.lower[1]) / hy).astype(int), 0, leaf.shape[1] - 2)
        s = (px - leaf.lower[0]) / hx - i
        r = (py - leaf.lower[1]) / hy - j
        w00, w10, w01, w11 = w[i, j], w[i + 1, j], w[i, j + 1], w[i + 1, j + 1]
        value = (1 - s) * (1 - r) * w00 + s * (1 - r) * w10 + (1 - s) * r * w01 + s * r * w11
        ds = ((1 - r) * (w10 - w00) + r * (w11 - w01)) / hx
        dr = ((1 - s) * (w01 - w00) + s * (w11 - w10)) / hy
        gap = goal - value
        det = ds.real * dr.imag - dr.real * ds.imag
        det = np.where(det == 0.0, np.nan, det)
        px = px + (dr.imag * gap.real - dr.real * gap.imag) / det
        py = py + (ds.real * gap.imag - ds.imag * gap.real) / det
    z = np.where(inside, px + 1j * py, np.nan + 0j)
    return z.reshape(targets.shape)


def sample_chart(w: ComplexArray, leaf: LeafGrid2, points: ComplexArray) -> ComplexArray:
    """Билинейная интерполяция карты; вне решётки NaN."""
    axes = (leaf.axis(0), leaf.axis(1))
    query = np.column_stack([points.real.ravel(), points.imag.ravel()])
    finite = np.all(np.isfinite(query), axis=-1)
    safe = np.where(finite[:, None], query, np.array([leaf.lower[0], leaf.lower[1]]))
    real = RegularGridInterpolator(axes, w.real, bounds_error=False, fill_value=np.nan)(safe)
    imag = RegularGridInterpolator(axes, w.imag, bounds_error=False, fill_value=np.nan)(safe)
    values = np.where(finite, real + 1j * imag, np.nan + 0j)
    return values.reshape(points.shape)


@dataclass(frozen=True)
class LeafHolomorphy:
    index: int
    t: float
    residual: float
    antiholomorphic: bool
    coverage: float


@dataclass
class HolomorphyReport:
    """Остаток Коши–Римана h = w_N∘φ∘w_M⁻¹ на каждом листе."""

    mode: str
    leaves: list[LeafHolomorphy]
    chart_source: FoliatedChart
    chart_target: FoliatedChart
    log: list[str] = field(default_factory=list)

    @property
    def residual(self) -> float:
        return max((leaf.residual for leaf in self.leaves), default=0.0)

    @property
    def orientation(self) -> str:
        flags = {leaf.antiholomorphic for leaf in self.leaves}
        if flags == {False}:
            return 'holomorphic'
        if flags == {True}:
            return 'antiholomorphic'
        return 'mixed' if flags else 'none'

    def summary(self) -> dict[str, object]:
        return {
            'mode': self.mode,
            'orientation': self.orientation,
            'cr_residual_max': self.residual,
            'leaves': [
                {'t': leaf.t, 'residual': leaf.residual, 'antiholomorphic': leaf.antiholomorphic,
                 'coverage': leaf.coverage}
                for leaf in self.leaves
            ],
            'source_chart': self.chart_source.summary(),
            'target_chart': self.chart_target.summary(),
        }


def check_leaf_preserving(phi: SmoothMap, grid: Grid, leaf_axis: int = LEAF_AXIS, tol: float = LEAF_TOL) -> None:
    """φ должно сохранять координату листа."""
    points = grid.points()
    images, bad = phi.evaluate_masked(points)
    drift = np.abs(images[..., leaf_axis] - points[..., leaf_axis])[~bad]
    scale = np.maximum(1.0, np.abs(points[..., leaf_axis][~bad]))
    if np.any(drift > tol * scale):
        raise LeafMixingError(f"φ moves the leaf coordinate by up to {float(np.max(drift)):.3e}")


def image_grid(phi: SmoothMap, grid: Grid, leaf_axis: int = LEAF_AXIS) -> Grid:
    """Решётка на ограничивающем параллелепипеде образа; ось листа не меняется."""
    images, bad = phi.evaluate_masked(grid.points())
    lower = list(grid.lower)
    upper = list(grid.upper)
    for k in leaf_axes(leaf_axis):
        values = images[..., k][~bad]
        lower[k], upper[k] = float(np.min(values)), float(np.max(values))
    return Grid(tuple(lower), tuple(upper), grid.shape)  # type: ignore[arg-type]


def cauchy_riemann(h: ComplexArray, zeta: LeafGrid2) -> tuple[float, float]:
    """nanmax|h_ζ̄|/nanmax|h_ζ| и медиана якобиана |h_ζ|² − |h_ζ̄|²; при h_ζ ≡ 0 остаток NaN."""
    hx, hy = zeta.spacing
    dx = np.gradient(h, hx, axis=0, edge_order=2)
    dy = np.gradient(h, hy, axis=1, edge_order=2)
    hz = 0.5 * (dx - 1j * dy)
    hzbar = 0.5 * (dx + 1j * dy)
    if not np.any(np.isfinite(hz)):
        return float('nan'), float('nan')
    jacobian = float(np.nanmedian(np.abs(hz) ** 2 - np.abs(hzbar) ** 2))
    scale = float(np.nanmax(np.abs(hz)))
    if scale == 0.0:
        return float('nan'), jacobian
    return float(np.nanmax(np.abs(hzbar))) / scale, jacobian


def leafwise_holomorphy(
    phi: SmoothMap,
    g: MetricField,
    h: MetricField,
    grid: Grid,
    *,
    mode: str = MODE_FLATTENED,
    target_grid: Grid | None = None,
    leaf_axis: int = LEAF_AXIS,
    anchors: Sequence[tuple[float, float]] = DEFAULT_ANCHORS,
    k_max: float = K_MAX,
    rtol: float = SOLVER_RTOL,
    leaf_tol: float = LEAF_TOL,
) -> HolomorphyReport:
    """Проверить, что h = w_N∘φ∘w_M⁻¹ голоморфно (или антиголоморфно) на листах.

    flattened: w_N строится по h на решётке образа, φ обязано сохранять
    координату листа. pullback: w_N есть изотермическая карта φ*h на
    исходных листах, и h = w_N∘w_M⁻¹.
    """
    if mode not in MODES:
        raise InputError(f"unknown holomorphy mode '{mode}'")
    options = {'leaf_axis': leaf_axis, 'anchors': anchors, 'k_max': k_max, 'rtol': rtol}
    source = foliated_isothermal(metric_gram(g, grid), grid, **options)  # type: ignore[arg-type]
    if mode == MODE_FLATTENED:
        check_leaf_preserving(phi, grid, leaf_axis, leaf_tol)
        target = target_grid if target_grid is not None else image_grid(phi, grid, leaf_axis)
        charts = foliated_isothermal(metric_gram(h, target), target, **options)  # type: ignore[arg-type]
    else:
        charts = foliated_isothermal(pullback_gram(phi, h, grid), grid, **options)  # type: ignore[arg-type]

    a, b = leaf_axes(leaf_axis)
    leaves = []
    log = [*source.log, *charts.log]
    for index, t in enumerate(source.t):
        w_source = source.solutions[index]
        w_target = charts.solutions[index] if index < len(charts.solutions) else None
        if w_source is None or w_target is None:
            log.append(f"leaf {index} skipped: chart missing")
            continue
        w = w_source.w
        zeta = LeafGrid2(
            (float(np.min(w.real)), float(np.min(w.imag))),
            (float(np.max(w.real)), float(np.max(w.imag))),
            source.leaf.shape,
        )
        z = invert_chart(w, source.leaf, zeta.z())
        if mode == MODE_FLATTENED:
            points = np.zeros((*z.shape, DIMENSION))
            points[..., a] = z.real
            points[..., b] = z.imag
            points[..., leaf_axis] = t
            finite = np.isfinite(z)
            points[~finite] = grid.lower
            images, bad = phi.evaluate_masked(points)
            moved = images[..., a] + 1j * images[..., b]
            moved = np.where(finite & ~bad, moved, np.nan + 0j)
            values = sample_chart(w_target.w, charts.leaf, moved)
        else:
            values = sample_chart(w_target.w, charts.leaf, z)
        residual, jacobian = cauchy_riemann(values, zeta)
        antiholomorphic = bool(jacobian < 0.0)
        if antiholomorphic:
            residual, _ = cauchy_riemann(np.conj(values), zeta)
        coverage = float(np.count_nonzero(np.isfinite(values))) / values.size
        leaves.append(LeafHolomorphy(index, float(t), residual, antiholomorphic, coverage))

    report = HolomorphyReport(mode=mode, leaves=leaves, chart_source=source, chart_target=charts, log=log)
    report.log.append(f"{len(leaves)} leaf map(s) checked, {report.orientation}")
    return report
