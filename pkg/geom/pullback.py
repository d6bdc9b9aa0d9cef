"""Closed-form maps and metrics, the pullback operator S and spectral frame fields.

Maps and metric coefficients are expression trees from ``lang``; Jacobians
are built once by symbolic differentiation and then evaluated on points or
whole grids. S is returned in covector form: for the Jacobian J, the tangent
metric G at x and the target metric H at φ(x) it is ``Jᵀ H J G⁻¹``, which is
self-adjoint with respect to the cotangent metric G⁻¹.
"""

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import numpy.typing as npt

from lang.ast_nodes import Expression, Identifier
from lang.derivative import differentiate, substitute
from lang.evaluator import EvaluationError, evaluate, evaluate_masked
from lang.parser import parse_expression
from lang.printer import to_text

from .errors import (
    DegenerateMapError,
    DomainError,
    InputError,
    NonPositiveMetricError,
    RepeatedEigenvalueError,
)
from .grid import DIMENSION, Grid
from .tensor3 import (
    SELF_ADJOINT_TOL,
    SPECTRAL_GAP_TOL,
    FloatArray,
    canonical_coframe,
    check_metric,
    eig_sym3,
    identity,
    relative_gap,
)

COORDINATES = ('x1', 'x2', 'x3')
LEAF_PARAMETER = 't'
LEAF_AXIS = 2
METRIC_KEYS = ('g11', 'g12', 'g13', 'g22', 'g23', 'g33')
METRIC_SLOTS = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))

JACOBIAN_TOL = 1e-12
BOX_TOL = 1e-12

# Причины маскирования узлов
REASON_OK = 'ok'
REASON_DOMAIN = 'domain'
REASON_METRIC = 'metric'
REASON_DEGENERATE = 'degenerate'
REASON_REPEATED = 'repeated'

NEIGHBOUR_OFFSETS = ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1))


def coordinate_env(points: FloatArray) -> dict[str, FloatArray]:
    """Окружение вычислителя: x1, x2, x3 из последней оси массива точек."""
    points = np.asarray(points, dtype=np.float64)
    return {name: points[..., k] for k, name in enumerate(COORDINATES)}


@dataclass(frozen=True)
class Box:
    """Координатный параллелепипед области определения."""

    lower: tuple[float, float, float]
    upper: tuple[float, float, float]

    def contains(self, points: FloatArray) -> npt.NDArray[np.bool_]:
        points = np.asarray(points, dtype=np.float64)
        lower = np.asarray(self.lower)
        upper = np.asarray(self.upper)
        slack = BOX_TOL * np.maximum(1.0, np.abs(upper - lower))
        return np.all((points >= lower - slack) & (points <= upper + slack), axis=-1)


def parse_field(text: str, leaf_axis: int = LEAF_AXIS) -> Expression:
    """Выражение от x1, x2, x3; параметр листа t заменяется координатой оси листа."""
    expr = parse_expression(text, (*COORDINATES, LEAF_PARAMETER))
    return substitute(expr, LEAF_PARAMETER, Identifier(COORDINATES[leaf_axis]))


def _parse_all(texts: Sequence[str], leaf_axis: int = LEAF_AXIS) -> list[Expression]:
    return [parse_field(text, leaf_axis) for text in texts]


class SmoothMap:
    """Отображение φ, заданное тремя выражениями от x1, x2, x3."""

    def __init__(self, components: Sequence[Expression], box: Box | None = None) -> None:
        if len(components) != DIMENSION:
            raise InputError(f"a map needs {DIMENSION} components, got {len(components)}")
        self.components = tuple(components)
        self.box = box
        self.partials = tuple(
            tuple(differentiate(component, name) for name in COORDINATES)
            for component in self.components
        )

    @classmethod
    def from_text(cls, texts: Sequence[str], box: Box | None = None, leaf_axis: int = LEAF_AXIS) -> "SmoothMap":
        return cls(_parse_all(texts, leaf_axis), box)

    @classmethod
    def identity(cls, box: Box | None = None) -> "SmoothMap":
        return cls.from_text(COORDINATES, box)

    def texts(self) -> list[str]:
        return [to_text(component) for component in self.components]

    def _check_box(self, points: FloatArray) -> None:
        if self.box is not None and not np.all(self.box.contains(points)):
            raise DomainError(f"point outside the domain box {self.box.lower}..{self.box.upper}")

    def __call__(self, points: FloatArray) -> FloatArray:
        """Значения φ в точках (строгий режим)."""
        points = np.asarray(points, dtype=np.float64)
        self._check_box(points)
        env = coordinate_env(points)
        try:
            values = [np.broadcast_to(evaluate(c, env), points.shape[:-1]) for c in self.components]
        except EvaluationError as exc:
            raise DomainError(str(exc)) from exc
        return np.stack(values, axis=-1)

    def evaluate_masked(self, points: FloatArray) -> tuple[FloatArray, npt.NDArray[np.bool_]]:
        """Значения φ с маской узлов вне области определения."""
        points = np.asarray(points, dtype=np.float64)
        env = coordinate_env(points)
        columns = [evaluate_masked(c, env) for c in self.components]
        values = np.stack([np.broadcast_to(v, points.shape[:-1]) for v, _ in columns], axis=-1)
        invalid = np.any(np.stack([np.broadcast_to(b, points.shape[:-1]) for _, b in columns]), axis=0)
        if self.box is not None:
            invalid = invalid | ~self.box.contains(points)
        return np.where(invalid[..., None], np.nan, values), invalid

    def jacobian_masked(self, points: FloatArray) -> tuple[FloatArray, npt.NDArray[np.bool_]]:
        """Матрицы Якоби J[i, j] = ∂φ_i/∂x_j на массиве точек."""
        points = np.asarray(points, dtype=np.float64)
        batch = points.shape[:-1]
        env = coordinate_env(points)
        result = np.empty((*batch, DIMENSION, DIMENSION))
        invalid = np.zeros(batch, dtype=bool)
        for i, row in enumerate(self.partials):
            for j, partial in enumerate(row):
                values, bad = evaluate_masked(partial, env)
                result[..., i, j] = np.broadcast_to(values, batch)
                invalid |= np.broadcast_to(bad, batch)
        if self.box is not None:
            invalid = invalid | ~self.box.contains(points)
        return np.where(invalid[..., None, None], np.nan, result), invalid


class MetricField:
    """Риманова метрика: шесть выражений g11, g12, g13, g22, g23, g33."""

    def __init__(self, coefficients: Sequence[Expression]) -> None:
        if len(coefficients) != len(METRIC_KEYS):
            raise InputError(f"a metric needs {len(METRIC_KEYS)} coefficients, got {len(coefficients)}")
        self.coefficients = tuple(coefficients)

    @classmethod
    def from_text(cls, texts: Sequence[str], leaf_axis: int = LEAF_AXIS) -> "MetricField":
        return cls(_parse_all(texts, leaf_axis))

    @classmethod
    def euclidean(cls) -> "MetricField":
        return cls.from_text(('1', '0', '0', '1', '0', '1'))

    def texts(self) -> list[str]:
        return [to_text(c) for c in self.coefficients]

    def evaluate_masked(self, points: FloatArray) -> tuple[FloatArray, npt.NDArray[np.bool_]]:
        points = np.asarray(points, dtype=np.float64)
        batch = points.shape[:-1]
        env = coordinate_env(points)
        gram = np.empty((*batch, DIMENSION, DIMENSION))
        invalid = np.zeros(batch, dtype=bool)
        for (i, j), coefficient in zip(METRIC_SLOTS, self.coefficients):
            values, bad = evaluate_masked(coefficient, env)
            gram[..., i, j] = gram[..., j, i] = np.broadcast_to(values, batch)
            invalid |= np.broadcast_to(bad, batch)
        return np.where(invalid[..., None, None], np.nan, gram), invalid

    def __call__(self, points: FloatArray) -> FloatArray:
        """Матрица Грама в точках; ошибки области и не-SPD значения отвергаются."""
        gram, invalid = self.evaluate_masked(points)
        if np.any(invalid):
            raise DomainError("metric coefficients are undefined at the point")
        return check_metric(gram)


def jacobian(phi: SmoothMap, x: FloatArray) -> FloatArray:
    """Точная матрица Якоби в точке."""
    x = np.asarray(x, dtype=np.float64)
    phi._check_box(x)
    env = coordinate_env(x)
    try:
        rows = [[float(evaluate(partial, env)) for partial in row] for row in phi.partials]
    except EvaluationError as exc:
        raise DomainError(str(exc)) from exc
    return np.array(rows)


def degenerate_nodes(jac: FloatArray, tol: float = JACOBIAN_TOL) -> npt.NDArray[np.bool_]:
    """|det J| < tol·‖J‖³: отображение не является локальным диффеоморфизмом."""
    scale = np.sqrt(np.sum(jac * jac, axis=(-2, -1)))
    return np.asarray(np.abs(np.linalg.det(jac)) < tol * scale ** 3)


def covector_operator(jac: FloatArray, g: FloatArray, h: FloatArray) -> FloatArray:
    """S на компонентах ковекторов: Jᵀ H J G⁻¹."""
    return np.swapaxes(jac, -1, -2) @ h @ jac @ np.linalg.inv(g)


def tangent_operator(jac: FloatArray, g: FloatArray, h: FloatArray) -> FloatArray:
    """S на касательных векторах: G⁻¹ Jᵀ H J."""
    return np.linalg.inv(g) @ np.swapaxes(jac, -1, -2) @ h @ jac


def s_operator(
    phi: SmoothMap,
    g: MetricField,
    h: MetricField,
    x: FloatArray,
    *,
    jacobian_tol: float = JACOBIAN_TOL,
) -> FloatArray:
    """S = (φ∗)*φ∗ в точке x (на ковекторах)."""
    x = np.asarray(x, dtype=np.float64)
    jac = jacobian(phi, x)
    if degenerate_nodes(jac, jacobian_tol):
        raise DegenerateMapError(f"Jacobian is singular at {x.tolist()}: det = {np.linalg.det(jac):.3e}")
    return covector_operator(jac, g(x), h(phi(x)))


@dataclass(frozen=True)
class SpectralData:
    """Собственные значения S и канонический собственный корепер в точке."""

    point: FloatArray
    operator: FloatArray
    cometric: FloatArray
    values: FloatArray
    covectors: FloatArray
    vectors: FloatArray
    gap: float

    def eta(self, k: int) -> FloatArray:
        return self.covectors[:, k - 1]

    def xi(self, k: int) -> FloatArray:
        return self.vectors[:, k - 1]


def spectral(
    phi: SmoothMap,
    g: MetricField,
    h: MetricField,
    x: FloatArray,
    *,
    gap_tol: float = SPECTRAL_GAP_TOL,
    jacobian_tol: float = JACOBIAN_TOL,
    self_adjoint_tol: float = SELF_ADJOINT_TOL,
    orientation: int = 1,
) -> SpectralData:
    """Спектральные данные S в точке; требуется простой спектр."""
    x = np.asarray(x, dtype=np.float64)
    s = s_operator(phi, g, h, x, jacobian_tol=jacobian_tol)
    cometric = np.linalg.inv(g(x))
    decomposition = eig_sym3(s, cometric, self_adjoint_tol=self_adjoint_tol)
    values = decomposition.values
    if values[0] <= 0.0:
        raise DegenerateMapError(f"S is not positive definite at {x.tolist()}")
    gap = float(relative_gap(values))
    if gap < gap_tol:
        raise RepeatedEigenvalueError(f"eigenvalues {values.tolist()} at {x.tolist()} are not distinct")
    covectors = canonical_coframe(decomposition.covectors, orientation)
    return SpectralData(
        point=x,
        operator=s,
        cometric=cometric,
        values=values,
        covectors=covectors,
        vectors=np.linalg.inv(covectors).T,
        gap=gap,
    )


@dataclass
class FrameField:
    """Поле собственных кореперов на решётке с согласованными знаками.

    Маскированные узлы содержат NaN; причина хранится в ``reasons``.
    """

    grid: Grid
    operator: FloatArray
    cometric: FloatArray
    values: FloatArray
    covectors: FloatArray
    vectors: FloatArray
    gap: FloatArray
    reasons: npt.NDArray[np.str_]
    holonomy: bool
    components: int
    flips: int
    anchor: tuple[int, int, int]
    orientation: int = 1
    log: list[str] = field(default_factory=list)

    @property
    def valid(self) -> npt.NDArray[np.bool_]:
        return np.asarray(self.reasons == REASON_OK)

    @property
    def masked_count(self) -> int:
        return int(np.count_nonzero(~self.valid))

    def eta(self, k: int) -> FloatArray:
        return self.covectors[..., :, k - 1]

    def xi(self, k: int) -> FloatArray:
        return self.vectors[..., :, k - 1]

    def sqrt_det_g(self) -> FloatArray:
        """√det g по узлам (g = m⁻¹)."""
        return 1.0 / np.sqrt(np.linalg.det(self.cometric))

    def reason_counts(self) -> dict[str, int]:
        names, counts = np.unique(self.reasons, return_counts=True)
        return {str(name): int(count) for name, count in zip(names, counts)}


def frame_field(
    phi: SmoothMap,
    g: MetricField,
    h: MetricField,
    grid: Grid,
    *,
    gap_tol: float = SPECTRAL_GAP_TOL,
    jacobian_tol: float = JACOBIAN_TOL,
    self_adjoint_tol: float = SELF_ADJOINT_TOL,
    anchor: tuple[int, int, int] = (0, 0, 0),
    orientation: int = 1,
) -> FrameField:
    """Поле спектральных данных S на всех узлах решётки."""
    points = grid.points()
    reasons = np.full(grid.shape, REASON_OK, dtype='<U10')

    jac, bad_jac = phi.jacobian_masked(points)
    images, bad_image = phi.evaluate_masked(points)
    gram_g, bad_g = g.evaluate_masked(points)
    gram_h, bad_h = h.evaluate_masked(np.where(bad_image[..., None], points, images))
    domain = bad_jac | bad_image | bad_g | bad_h
    reasons[domain] = REASON_DOMAIN

    eye = identity(grid.shape)
    gram_g = np.where(domain[..., None, None], eye, gram_g)
    gram_h = np.where(domain[..., None, None], eye, gram_h)
    jac = np.where(domain[..., None, None], eye, jac)

    not_spd = (np.linalg.eigvalsh(gram_g)[..., 0] <= 0.0) | (np.linalg.eigvalsh(gram_h)[..., 0] <= 0.0)
    reasons[~domain & not_spd] = REASON_METRIC
    degenerate = degenerate_nodes(jac, jacobian_tol)
    reasons[(reasons == REASON_OK) & degenerate] = REASON_DEGENERATE

    usable = reasons == REASON_OK
    gram_g = np.where(usable[..., None, None], gram_g, eye)
    gram_h = np.where(usable[..., None, None], gram_h, eye)
    jac = np.where(usable[..., None, None], jac, eye)

    frame = frame_from_operators(
        grid,
        covector_operator(jac, gram_g, gram_h),
        np.linalg.inv(gram_g),
        reasons=reasons,
        gap_tol=gap_tol,
        self_adjoint_tol=self_adjoint_tol,
        anchor=anchor,
        orientation=orientation,
    )
    frame.log.insert(0, f"map {phi.texts()} sampled on {grid.shape} nodes")
    return frame


def frame_from_operators(
    grid: Grid,
    operator: FloatArray,
    cometric: FloatArray | None = None,
    *,
    reasons: npt.NDArray[np.str_] | None = None,
    gap_tol: float = SPECTRAL_GAP_TOL,
    self_adjoint_tol: float = SELF_ADJOINT_TOL,
    anchor: tuple[int, int, int] = (0, 0, 0),
    orientation: int = 1,
) -> FrameField:
    """Поле спектральных данных заданного поля операторов S."""
    operator = np.asarray(operator, dtype=np.float64)
    if operator.shape != (*grid.shape, DIMENSION, DIMENSION):
        raise InputError(f"operator field has shape {operator.shape}, grid is {grid.shape}")
    eye = identity(grid.shape)
    cometric = eye if cometric is None else np.asarray(cometric, dtype=np.float64)
    reasons = np.full(grid.shape, REASON_OK, dtype='<U10') if reasons is None else reasons.copy()

    usable = reasons == REASON_OK
    usable &= np.all(np.isfinite(operator), axis=(-2, -1)) & np.all(np.isfinite(cometric), axis=(-2, -1))
    reasons[~usable & (reasons == REASON_OK)] = REASON_DOMAIN
    safe_operator = np.where(usable[..., None, None], operator, eye)
    safe_cometric = np.where(usable[..., None, None], cometric, eye)
    try:
        check_metric(safe_cometric)
    except NonPositiveMetricError:
        bad = np.linalg.eigvalsh(safe_cometric)[..., 0] <= 0.0
        reasons[bad] = REASON_METRIC
        safe_cometric = np.where(bad[..., None, None], eye, safe_cometric)
        safe_operator = np.where(bad[..., None, None], eye, safe_operator)

    decomposition = eig_sym3(safe_operator, safe_cometric, self_adjoint_tol=self_adjoint_tol)
    values = decomposition.values
    gap = relative_gap(values)
    reasons[(reasons == REASON_OK) & (values[..., 0] <= 0.0)] = REASON_DEGENERATE
    reasons[(reasons == REASON_OK) & (gap < gap_tol)] = REASON_REPEATED
    valid = reasons == REASON_OK

    covectors = canonical_coframe(decomposition.covectors, orientation)
    covectors, components, flips = _align_signs(covectors, safe_cometric, valid, grid, anchor)
    holonomy = _sign_conflict(covectors, safe_cometric, valid, grid)
    vectors = np.swapaxes(np.linalg.inv(covectors), -1, -2)

    hidden = ~valid
    log = [
        f"{int(np.count_nonzero(valid))} of {grid.size} nodes accepted",
        f"anchor {anchor} is {'valid' if valid[anchor] else 'masked'}; {components} component(s), {flips} sign flip(s)",
    ]
    if decomposition.jacobi.any():
        log.append(f"Jacobi fallback used at {int(np.count_nonzero(decomposition.jacobi))} node(s)")
    if holonomy:
        log.append("sign alignment obstructed: holonomy flag set")

    return FrameField(
        grid=grid,
        operator=np.where(hidden[..., None, None], np.nan, safe_operator),
        cometric=np.where(hidden[..., None, None], np.nan, safe_cometric),
        values=np.where(hidden[..., None], np.nan, values),
        covectors=np.where(hidden[..., None, None], np.nan, covectors),
        vectors=np.where(hidden[..., None, None], np.nan, vectors),
        gap=np.where(hidden, np.nan, gap),
        reasons=reasons,
        holonomy=holonomy,
        components=components,
        flips=flips,
        anchor=anchor,
        orientation=orientation,
        log=log,
    )


def _neighbour(
    node: tuple[int, ...], offset: tuple[int, int, int], grid: Grid,
) -> tuple[int, int, int] | None:
    index = []
    for k in range(DIMENSION):
        i = node[k] + offset[k]
        if grid.periodic:
            i %= grid.shape[k]
        elif not 0 <= i < grid.shape[k]:
            return None
        index.append(i)
    return index[0], index[1], index[2]


def _align_signs(
    frame: FloatArray,
    cometric: FloatArray,
    valid: npt.NDArray[np.bool_],
    grid: Grid,
    anchor: tuple[int, int, int],
) -> tuple[FloatArray, int, int]:
    """Обход в ширину: знак столбца в соседе выбирается по знаку ⟨η(p), η(q)⟩.

    Каждая связная компонента немаскированных узлов выравнивается от
    своего первого узла; первой обрабатывается компонента якоря.
    """
    frame = frame.copy()
    visited = np.zeros(grid.shape, dtype=bool)
    components = 0
    flips = 0
    starts = [anchor] + [tuple(int(i) for i in node) for node in np.argwhere(valid)]
    for start in starts:
        if not valid[start] or visited[start]:
            continue
        components += 1
        visited[start] = True
        queue = deque([start])
        while queue:
            p = queue.popleft()
            for offset in NEIGHBOUR_OFFSETS:
                q = _neighbour(p, offset, grid)
                if q is None or visited[q] or not valid[q]:
                    continue
                weight = 0.5 * (cometric[p] + cometric[q])
                dots = np.einsum('ij,ik,kj->j', frame[p], weight, frame[q])
                negative = dots < 0.0
                if negative.any():
                    frame[q][:, negative] *= -1.0
                    flips += int(np.count_nonzero(negative))
                visited[q] = True
                queue.append(q)
    return frame, components, flips


def _sign_conflict(
    frame: FloatArray,
    cometric: FloatArray,
    valid: npt.NDArray[np.bool_],
    grid: Grid,
) -> bool:
    """Есть ли ребро решётки с отрицательным ⟨ηᵢ(p), ηᵢ(q)⟩ после выравнивания."""
    for k in range(DIMENSION):
        if grid.periodic:
            here = (frame, cometric, valid)
            there = (np.roll(frame, -1, axis=k), np.roll(cometric, -1, axis=k), np.roll(valid, -1, axis=k))
        else:
            p, q = grid.neighbour_pairs(k)
            here = (frame[p], cometric[p], valid[p])
            there = (frame[q], cometric[q], valid[q])
        weight = 0.5 * (here[1] + there[1])
        dots = np.einsum('...ij,...ik,...kj->...j', here[0], weight, there[0])
        both = here[2] & there[2]
        if np.any((dots < 0.0) & both[..., None]):
            return True
    return False
