"""Pointwise exterior algebra and metric linear algebra on 3D cotangent spaces.

All functions accept a single object or a stack of them: covectors and
two-forms have shape ``(..., 3)``, operators and metrics ``(..., 3, 3)``.
Operators act on covector *components* (column vectors) in the declared
coframe; a cotangent metric is the Gram matrix of that coframe.
Two-form components are taken on ``(θ2∧θ3, θ3∧θ1, θ1∧θ2)``.
"""

from dataclasses import dataclass
from typing import TypeAlias

import numpy as np
import numpy.typing as npt

from .errors import (
    NonPositiveMetricError,
    NonUnitCovectorError,
    NotSelfAdjointError,
    RepeatedEigenvalueError,
)

FloatArray: TypeAlias = npt.NDArray[np.float64]
Covector3: TypeAlias = FloatArray
TwoForm3: TypeAlias = FloatArray
Operator3: TypeAlias = FloatArray
CotangentMetric: TypeAlias = FloatArray

# Допуски
METRIC_SYMMETRY_TOL = 1e-12
UNIT_TOL = 1e-9
SELF_ADJOINT_TOL = 1e-9
SPECTRAL_GAP_TOL = 1e-8
EIGEN_RESIDUAL_TOL = 1e-10
DISCRIMINANT_TOL = 1e-12
LEMMA_RESIDUAL_TOL = 1e-9
DEGENERATE_COMPONENT_TOL = 1e-12
BISECTION_TOL = 1e-13
BISECTION_MAX_ITER = 200
JACOBI_TOL = 1e-15
JACOBI_MAX_SWEEPS = 50
TIE_TOL = 1e-9
TINY = 1e-300


def identity(shape: tuple[int, ...] = ()) -> FloatArray:
    """Единичная матрица (стопка единичных матриц)."""
    return np.broadcast_to(np.eye(3), (*shape, 3, 3)).copy()


def _metric(m: CotangentMetric | None, like: FloatArray) -> FloatArray:
    if m is None:
        return identity(like.shape[:-1] if like.ndim >= 1 else ())
    return np.asarray(m, dtype=np.float64)


def check_metric(m: CotangentMetric, tol: float = METRIC_SYMMETRY_TOL) -> FloatArray:
    """Проверить симметрию и положительную определённость метрики."""
    m = np.asarray(m, dtype=np.float64)
    if not np.all(np.isfinite(m)):
        raise NonPositiveMetricError("metric has non-finite entries")
    scale = np.max(np.abs(m), axis=(-2, -1))
    asym = np.max(np.abs(m - np.swapaxes(m, -1, -2)), axis=(-2, -1))
    if np.any(asym > tol * np.maximum(scale, TINY)):
        raise NonPositiveMetricError("metric is not symmetric")
    if np.any(np.linalg.eigvalsh(m)[..., 0] <= 0.0):
        raise NonPositiveMetricError("metric is not positive definite")
    return m


def orthonormalizer(m: CotangentMetric) -> FloatArray:
    """Множитель Холецкого L (m = L Lᵀ); в новой кобазе компоненты равны Lᵀα."""
    try:
        return np.linalg.cholesky(check_metric(m))
    except np.linalg.LinAlgError as exc:
        raise NonPositiveMetricError("metric is not positive definite") from exc


def to_orthonormal(alpha: Covector3, chol: FloatArray) -> FloatArray:
    """Компоненты ковектора в m-ортонормированной кобазе."""
    return np.einsum('...ji,...j->...i', chol, alpha)


def from_orthonormal(alpha_bar: Covector3, chol: FloatArray) -> FloatArray:
    """Обратный переход: α = L⁻ᵀ ᾱ."""
    inv_t = np.swapaxes(np.linalg.inv(chol), -1, -2)
    return np.einsum('...ij,...j->...i', inv_t, alpha_bar)


def operator_to_orthonormal(op: Operator3, chol: FloatArray) -> FloatArray:
    """Матрица оператора в m-ортонормированной кобазе: Lᵀ T L⁻ᵀ."""
    inv_t = np.swapaxes(np.linalg.inv(chol), -1, -2)
    return np.swapaxes(chol, -1, -2) @ op @ inv_t


def inner(a: Covector3, b: Covector3, m: CotangentMetric | None = None) -> FloatArray:
    """Скалярное произведение ковекторов ⟨a, b⟩_m."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.einsum('...i,...ij,...j->...', a, _metric(m, a), b)


def norm(a: Covector3, m: CotangentMetric | None = None) -> FloatArray:
    """Норма ковектора."""
    return np.sqrt(np.maximum(inner(a, a, m), 0.0))


def wedge(a: Covector3, b: Covector3) -> TwoForm3:
    """Внешнее произведение двух 1-форм."""
    return np.cross(a, b)


def wedge_top(a: Covector3, beta: TwoForm3) -> FloatArray:
    """Произведение 1-формы и 2-формы: коэффициент при θ1∧θ2∧θ3."""
    return np.einsum('...i,...i->...', a, beta)


def hodge_star(
    form: FloatArray,
    m: CotangentMetric | None = None,
    orientation: int = 1,
    degree: int = 1,
) -> FloatArray:
    """Звезда Ходжа на p-формах, p ∈ {0, 1, 2, 3}.

    Форма объёма равна orientation·θ1∧θ2∧θ3/√det m. Для p = 0 и p = 3
    формы задаются одним коэффициентом.
    """
    form = np.asarray(form, dtype=np.float64)
    batch = form.shape if degree in (0, 3) else form.shape[:-1]
    gram = check_metric(m) if m is not None else identity(batch)
    sqrt_det = np.sqrt(np.linalg.det(gram))

    if degree == 0:
        return orientation * form / sqrt_det
    if degree == 1:
        return orientation * np.einsum('...ij,...j->...i', gram, form) / sqrt_det[..., None]
    if degree == 2:
        return orientation * sqrt_det[..., None] * np.einsum('...ij,...j->...i', np.linalg.inv(gram), form)
    if degree == 3:
        return orientation * form * sqrt_det
    raise ValueError(f"Unsupported form degree {degree}")


def skew(omega: Covector3) -> FloatArray:
    """Матрица векторного произведения [ω]×."""
    omega = np.asarray(omega, dtype=np.float64)
    result = np.zeros((*omega.shape[:-1], 3, 3))
    result[..., 0, 1] = -omega[..., 2]
    result[..., 0, 2] = omega[..., 1]
    result[..., 1, 0] = omega[..., 2]
    result[..., 1, 2] = -omega[..., 0]
    result[..., 2, 0] = -omega[..., 1]
    result[..., 2, 1] = omega[..., 0]
    return result


def star_iota(omega: Covector3, m: CotangentMetric | None = None, orientation: int = 1) -> Operator3:
    """Оператор α ↦ ∗(ω∧α)."""
    omega = np.asarray(omega, dtype=np.float64)
    cross = skew(omega)
    if m is None:
        return orientation * cross
    gram = check_metric(m)
    sqrt_det = np.sqrt(np.linalg.det(gram))
    return orientation * sqrt_det[..., None, None] * (np.linalg.inv(gram) @ cross)


def check_unit(omega: Covector3, m: CotangentMetric | None = None, tol: float = UNIT_TOL) -> None:
    """Проверить, что ковектор единичный."""
    if np.any(np.abs(norm(omega, m) - 1.0) > tol):
        raise NonUnitCovectorError("covector must have unit norm")


def rot(
    theta: float | FloatArray,
    omega: Covector3,
    m: CotangentMetric | None = None,
    orientation: int = 1,
) -> Operator3:
    """Поворот вокруг ω на угол θ: Id + sinθ·K + (1 − cosθ)·K², K = ∗ι(ω)."""
    check_unit(omega, m)
    k = star_iota(omega, m, orientation)
    theta = np.asarray(theta, dtype=np.float64)[..., None, None]
    eye = identity(k.shape[:-2])
    return eye + np.sin(theta) * k + (1.0 - np.cos(theta)) * (k @ k)


def sym_prod(omega: Covector3, eta: Covector3, m: CotangentMetric | None = None) -> Operator3:
    """Симметричное произведение: α ↦ ⟨ω,α⟩η + ⟨η,α⟩ω."""
    omega = np.asarray(omega, dtype=np.float64)
    eta = np.asarray(eta, dtype=np.float64)
    gram = _metric(m, omega)
    m_omega = np.einsum('...ij,...j->...i', gram, omega)
    m_eta = np.einsum('...ij,...j->...i', gram, eta)
    return np.einsum('...i,...j->...ij', eta, m_omega) + np.einsum('...i,...j->...ij', omega, m_eta)


def commutator(t1: Operator3, t2: Operator3) -> Operator3:
    """Коммутатор [T1, T2] = T1T2 − T2T1."""
    return t1 @ t2 - t2 @ t1


def adjoint(op: Operator3, m: CotangentMetric | None = None) -> Operator3:
    """Сопряжённый оператор относительно m: m⁻¹ Tᵀ m."""
    op_t = np.swapaxes(np.asarray(op, dtype=np.float64), -1, -2)
    if m is None:
        return op_t
    gram = np.asarray(m, dtype=np.float64)
    return np.linalg.inv(gram) @ op_t @ gram


# Спектральное разложение

@dataclass(frozen=True)
class EigenDecomposition:
    """Собственные значения по возрастанию и m-ортонормированные собственные ковекторы (столбцы)."""

    values: FloatArray
    covectors: FloatArray
    jacobi: npt.NDArray[np.bool_]


def _analytic_eigenvalues(a: FloatArray) -> FloatArray:
    """Тригонометрическая формула для симметричной 3×3 матрицы."""
    p1 = a[..., 0, 1] ** 2 + a[..., 0, 2] ** 2 + a[..., 1, 2] ** 2
    q = np.trace(a, axis1=-2, axis2=-1) / 3.0
    diag = np.diagonal(a, axis1=-2, axis2=-1)
    p2 = np.sum((diag - q[..., None]) ** 2, axis=-1) + 2.0 * p1
    p = np.sqrt(p2 / 6.0)
    safe_p = np.where(p > 0.0, p, 1.0)
    b = (a - q[..., None, None] * np.eye(3)) / safe_p[..., None, None]
    r = np.clip(np.linalg.det(b) / 2.0, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    largest = q + 2.0 * p * np.cos(phi)
    smallest = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    middle = 3.0 * q - largest - smallest
    return np.stack([smallest, middle, largest], axis=-1)


def _null_vector(a: FloatArray, value: FloatArray) -> FloatArray:
    """Единичный вектор ядра A − λI: наибольшее из попарных векторных произведений строк."""
    shifted = a - value[..., None, None] * np.eye(3)
    rows = [shifted[..., i, :] for i in range(3)]
    crosses = np.stack([np.cross(rows[0], rows[1]), np.cross(rows[0], rows[2]), np.cross(rows[1], rows[2])],
                       axis=-2)
    lengths = np.linalg.norm(crosses, axis=-1)
    best = np.argmax(lengths, axis=-1)
    vector = np.take_along_axis(crosses, best[..., None, None], axis=-2)[..., 0, :]
    length = np.take_along_axis(lengths, best[..., None], axis=-1)
    return vector / np.maximum(length, TINY)


def _jacobi(a: FloatArray) -> tuple[FloatArray, FloatArray]:
    """Циклический метод Якоби для одной симметричной матрицы."""
    a = np.array(a, dtype=np.float64)
    v = np.eye(3)
    scale = np.sum(a * a)
    for _ in range(JACOBI_MAX_SWEEPS):
        off = a[0, 1] ** 2 + a[0, 2] ** 2 + a[1, 2] ** 2
        if off <= JACOBI_TOL ** 2 * scale:
            break
        for p, q in ((0, 1), (0, 2), (1, 2)):
            if a[p, q] == 0.0:
                continue
            theta = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
            sign = 1.0 if theta >= 0.0 else -1.0
            t = sign / (abs(theta) + np.sqrt(theta * theta + 1.0))
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            rotation = np.eye(3)
            rotation[p, p] = c
            rotation[q, q] = c
            rotation[p, q] = s
            rotation[q, p] = -s
            a = rotation.T @ a @ rotation
            v = v @ rotation
    values = np.diag(a).copy()
    order = np.argsort(values)
    return values[order], v[:, order]


def _symmetric_eigen(a: FloatArray) -> tuple[FloatArray, FloatArray, npt.NDArray[np.bool_]]:
    """Аналитическое разложение с откатом на Якоби для плохо обусловленных узлов."""
    batch = a.shape[:-2]
    flat = a.reshape(-1, 3, 3)

    values = _analytic_eigenvalues(flat)
    v1 = _null_vector(flat, values[:, 0])
    v3 = _null_vector(flat, values[:, 2])
    v3 = v3 - np.sum(v3 * v1, axis=-1, keepdims=True) * v1
    v3 = v3 / np.maximum(np.linalg.norm(v3, axis=-1, keepdims=True), TINY)
    v2 = np.cross(v3, v1)
    vectors = np.stack([v1, v2, v3], axis=-1)

    # Диагональные входы: точный ответ без арифметики
    off = np.abs(flat[:, 0, 1]) + np.abs(flat[:, 0, 2]) + np.abs(flat[:, 1, 2])
    diagonal = off == 0.0
    if np.any(diagonal):
        diag = np.diagonal(flat, axis1=-2, axis2=-1)
        order = np.argsort(diag, axis=-1, kind='stable')
        values = np.where(diagonal[:, None], np.take_along_axis(diag, order, axis=-1), values)
        permutation = np.swapaxes(np.eye(3)[order], -1, -2)
        vectors = np.where(diagonal[:, None, None], permutation, vectors)

    residual = np.linalg.norm(flat @ vectors - vectors * values[:, None, :], axis=-2)
    size = np.maximum(np.sqrt(np.sum(flat * flat, axis=(-2, -1))), TINY)
    bad = ~diagonal & (
        (relative_gap(values) < DISCRIMINANT_TOL)
        | np.any(residual > EIGEN_RESIDUAL_TOL * size[:, None], axis=-1)
    )

    for index in np.flatnonzero(bad):
        values[index], vectors[index] = _jacobi(flat[index])
    return values.reshape(*batch, 3), vectors.reshape(*batch, 3, 3), bad.reshape(batch)


def eig_sym3(
    s: Operator3,
    m: CotangentMetric | None = None,
    *,
    self_adjoint_tol: float = SELF_ADJOINT_TOL,
) -> EigenDecomposition:
    """Спектральное разложение оператора, самосопряжённого относительно m.

    Обобщённая задача сводится к обычной разложением Холецкого m = L Lᵀ.
    """
    s = np.asarray(s, dtype=np.float64)
    gram = identity(s.shape[:-2]) if m is None else check_metric(m)

    weighted = gram @ s
    asym = np.sqrt(np.sum((weighted - np.swapaxes(weighted, -1, -2)) ** 2, axis=(-2, -1)))
    size = np.sqrt(np.sum(weighted ** 2, axis=(-2, -1)))
    if np.any(asym > self_adjoint_tol * np.maximum(size, TINY)):
        raise NotSelfAdjointError("operator is not self-adjoint with respect to the metric")

    chol = np.linalg.cholesky(gram)
    s_bar = operator_to_orthonormal(s, chol)
    s_bar = 0.5 * (s_bar + np.swapaxes(s_bar, -1, -2))
    values, vectors, jacobi = _symmetric_eigen(s_bar)
    inv_t = np.swapaxes(np.linalg.inv(chol), -1, -2)
    return EigenDecomposition(values=values, covectors=inv_t @ vectors, jacobi=jacobi)


def relative_gap(values: FloatArray) -> FloatArray:
    """Относительная спектральная щель min(λ2−λ1, λ3−λ2)/|λ|max."""
    scale = np.maximum(np.max(np.abs(values), axis=-1), TINY)
    return np.minimum(values[..., 1] - values[..., 0], values[..., 2] - values[..., 1]) / scale


def canonical_coframe(covectors: FloatArray, orientation: int = 1) -> FloatArray:
    """Фиксировать знаки собственного корепера.

    У η2 и η3 наибольшая по модулю компонента (первая при равенстве)
    положительна; знак η1 выбирается так, чтобы (η1, η2, η3) была
    ориентирована согласно orientation.
    """
    frame = np.array(covectors, dtype=np.float64)
    for column in (1, 2):
        vector = frame[..., :, column]
        magnitude = np.abs(vector)
        leading = magnitude >= (1.0 - TIE_TOL) * np.max(magnitude, axis=-1, keepdims=True)
        first = np.argmax(leading, axis=-1)
        component = np.take_along_axis(vector, first[..., None], axis=-1)[..., 0]
        frame[..., :, column] *= np.where(component < 0.0, -1.0, 1.0)[..., None]
    det = np.linalg.det(frame)
    frame[..., :, 0] *= np.where(det * orientation < 0.0, -1.0, 1.0)[..., None]
    return frame


# Лемма о паре ковекторов

@dataclass(frozen=True)
class Lemma3Pair:
    """Пара (η, σ) и сведения о способе построения."""

    eta: Covector3
    sigma: Covector3
    branch: str
    root: float
    residual: float


def _secular_roots(a: FloatArray, values: FloatArray) -> list[float]:
    """Корни Σ aᵢ²/(λᵢ − C) = 0 бисекцией на интервалах между собственными значениями."""
    def secular(c: float) -> float:
        return float(np.sum(a * a / (values - c)))

    width = values[2] - values[0]
    inset = 1e-12 * width
    roots: list[float] = []
    for lo, hi in ((values[0], values[1]), (values[1], values[2])):
        left, right = lo + inset, hi - inset
        if right <= left or not (secular(left) < 0.0 < secular(right)):
            continue
        for _ in range(BISECTION_MAX_ITER):
            middle = 0.5 * (left + right)
            if secular(middle) < 0.0:
                left = middle
            else:
                right = middle
            if right - left <= BISECTION_TOL:
                break
        roots.append(0.5 * (left + right))
    return roots


def _pair_from_direction(
    direction: FloatArray, s_bar: FloatArray, omega_bar: FloatArray, orientation: int,
) -> tuple[FloatArray, FloatArray, float]:
    """Отмасштабировать η и σ = Rot(ω)η в ортонормированной кобазе; вернуть невязку."""
    eta_hat = direction / np.linalg.norm(direction)
    sigma_hat = orientation * np.cross(omega_bar, eta_hat)
    eta = eta_hat / np.sqrt(eta_hat @ s_bar @ eta_hat)
    sigma = sigma_hat / np.sqrt(sigma_hat @ s_bar @ sigma_hat)
    s_omega = s_bar @ omega_bar
    residual = 0.0
    for x in (eta, sigma):
        lhs = s_bar @ x
        rhs = x / (x @ x) + (s_omega @ x) * omega_bar
        residual = max(residual, float(np.linalg.norm(lhs - rhs)))
    orth = max(abs(omega_bar @ eta), abs(omega_bar @ sigma), abs(eta @ sigma))
    return eta, sigma, max(residual, float(orth))


def lemma3_pair(
    omega: Covector3,
    s: Operator3,
    m: CotangentMetric | None = None,
    *,
    gap_tol: float = SPECTRAL_GAP_TOL,
    orientation: int = 1,
) -> Lemma3Pair:
    """Построить η, σ с Sη = η/|η|² + ⟨Sω,η⟩ω и тем же для σ.

    ω должен быть единичным. Общий случай: корень векового уравнения и
    η ∝ Σ aᵢ/(λᵢ − C) ηᵢ; вырожденный случай ω ∥ ηᵢ: η = λⱼ^{-1/2} ηⱼ.
    """
    omega = np.asarray(omega, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    gram = identity() if m is None else check_metric(m)
    check_unit(omega, gram)

    decomposition = eig_sym3(s, gram)
    values = decomposition.values
    if relative_gap(values) < gap_tol:
        raise RepeatedEigenvalueError(f"eigenvalues {values.tolist()} are not distinct")

    chol = np.linalg.cholesky(gram)
    s_bar = operator_to_orthonormal(s, chol)
    s_bar = 0.5 * (s_bar + s_bar.T)
    omega_bar = to_orthonormal(omega, chol)
    eigen_bar = np.stack([to_orthonormal(decomposition.covectors[:, i], chol) for i in range(3)], axis=-1)
    a = eigen_bar.T @ omega_bar

    candidates: list[tuple[float, FloatArray, FloatArray, str, float]] = []
    vanishing = np.abs(a) <= DEGENERATE_COMPONENT_TOL
    if np.count_nonzero(vanishing) >= 2:  # noqa: PLR2004
        aligned = int(np.argmax(np.abs(a)))
        j = min(i for i in range(3) if i != aligned)
        eta, sigma, residual = _pair_from_direction(eigen_bar[:, j], s_bar, omega_bar, orientation)
        candidates.append((residual, eta, sigma, "eigen", float(values[j])))
    else:
        for root in _secular_roots(a, values):
            direction = eigen_bar @ (a / (values - root))
            eta, sigma, residual = _pair_from_direction(direction, s_bar, omega_bar, orientation)
            candidates.append((residual, eta, sigma, "secular", root))

    if not candidates or min(c[0] for c in candidates) > LEMMA_RESIDUAL_TOL:
        # Сжатие S на плоскость ω⊥: собственные векторы сжатия дают ту же пару
        helper = np.eye(3)[int(np.argmin(np.abs(omega_bar)))]
        u = np.cross(omega_bar, helper)
        u /= np.linalg.norm(u)
        v = np.cross(omega_bar, u)
        basis = np.stack([u, v], axis=-1)
        compressed = basis.T @ s_bar @ basis
        plane_values, plane_vectors = np.linalg.eigh(0.5 * (compressed + compressed.T))
        direction = basis @ plane_vectors[:, 0]
        eta, sigma, residual = _pair_from_direction(direction, s_bar, omega_bar, orientation)
        candidates.append((residual, eta, sigma, "compressed", float(plane_values[0])))

    residual, eta_bar, sigma_bar, branch, root = min(candidates, key=lambda c: c[0])
    return Lemma3Pair(
        eta=from_orthonormal(eta_bar, chol),
        sigma=from_orthonormal(sigma_bar, chol),
        branch=branch,
        root=root,
        residual=residual,
    )
