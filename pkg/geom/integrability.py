"""Integrability of the conformal distributions ker ω± on a grid.

Three independent routes are provided:

* the Frobenius residual ω∧dω from finite-difference exterior calculus;
* the χ identities relating η₁∧dη₁, η₃∧dη₃ and the 2-form χη₁∧η₃;
* the moving-frame conditions written in an orthonormal frame (e₁, e₂, e₃),
  evaluated both term by term verbatim and through the generic n∧dn
  expansion of the normal field, with discrepancies collected as findings.

All sup norms skip masked nodes. Verdicts compare sup residuals with κh²,
h being the largest grid spacing.
"""

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import numpy.typing as npt

from lang.evaluator import evaluate_masked

from .errors import FrameError, HolonomyError, InapplicableError, InputError, RepeatedEigenvalueError
from .grid import DIMENSION, Grid, SampledForm, connected_components
from .pullback import LEAF_AXIS, FrameField, coordinate_env, parse_field
from .tensor3 import TINY, UNIT_TOL, FloatArray, identity, skew

INTEGRABILITY_KAPPA = 10.0
REGION_FLOOR = 1e-12
DIAGONAL_TOL = 1e-10
FINDING_TOL = 1e-8

REGIONS = (1, 2, 3)
# Компоненты нормального поля в области Uᵣ: n_c = a_ij + s·μβ_b, при s = 0 n_c = a_ij − λ
REGION_NORMALS: dict[int, tuple[tuple[int, int, int, int], ...]] = {
    1: ((1, 3, 1, 2), (2, 3, -1, 1), (3, 3, 0, 0)),
    2: ((1, 2, -1, 3), (2, 2, 0, 0), (2, 3, 1, 1)),
    3: ((1, 1, 0, 0), (1, 2, 1, 3), (1, 3, -1, 2)),
}


def _sup(values: FloatArray) -> float:
    finite = np.asarray(values)[np.isfinite(values)]
    return float(np.max(np.abs(finite))) if finite.size else 0.0


def threshold(grid: Grid, kappa: float = INTEGRABILITY_KAPPA) -> float:
    """Порог κh² для вердиктов по конечно-разностным невязкам."""
    return kappa * grid.h ** 2


# Фробениус

@dataclass(frozen=True)
class FrobeniusResult:
    """Поле |ω∧dω| и вердикт по нему."""

    label: str
    residual: FloatArray
    sup: float
    threshold: float

    @property
    def integrable(self) -> bool:
        return self.sup <= self.threshold

    def summary(self) -> dict[str, object]:
        return {
            'sup': self.sup,
            'threshold': self.threshold,
            'integrable': self.integrable,
        }


def frobenius_residual(
    omega: FloatArray,
    grid: Grid,
    cometric: FloatArray | None = None,
    *,
    kappa: float = INTEGRABILITY_KAPPA,
    normalize: bool = True,
    label: str = 'omega',
) -> FrobeniusResult:
    """|ω∧dω| в узлах относительно объёма метрики.

    При normalize ω сначала делится на свою длину, поэтому вердикт не
    зависит от умножения ω на положительную функцию.
    """
    omega = np.asarray(omega, dtype=np.float64)
    m = identity(grid.shape) if cometric is None else np.asarray(cometric, dtype=np.float64)
    if normalize:
        length = np.sqrt(np.einsum('...i,...ij,...j->...', omega, m, omega))
        omega = omega / np.where(length > TINY, length, np.nan)[..., None]
    form = SampledForm(1, omega, grid, label)
    top = form.wedge(form.d()).components
    residual = np.abs(top) * np.sqrt(np.linalg.det(m))
    return FrobeniusResult(label=label, residual=residual, sup=_sup(residual), threshold=threshold(grid, kappa))


# Функция χ и тождества для неё

def chi(spectra: FrameField) -> FloatArray:
    """χ = √(λ₃−λ₂)/√(λ₂−λ₁)."""
    values = np.asarray(spectra.values, dtype=np.float64)
    low = values[..., 1] - values[..., 0]
    high = values[..., 2] - values[..., 1]
    if np.any(np.isfinite(low) & ((low <= 0.0) | (high <= 0.0))):
        raise RepeatedEigenvalueError("χ needs three distinct eigenvalues")
    return np.sqrt(high) / np.sqrt(low)


@dataclass(frozen=True)
class Prop2Result:
    """Тождество для η₁∧dη₁ + χ²η₃∧dη₃ и замкнутость χη₁∧η₃."""

    identity_residual: float
    identity_sign: int
    closedness_residual: float
    plus_residual: float
    minus_residual: float
    clform_residual: float
    form: FloatArray
    dform: FloatArray
    threshold: float
    implication: bool | None
    warnings: tuple[str, ...] = ()

    def summary(self) -> dict[str, object]:
        return {
            'identity_residual': self.identity_residual,
            'identity_sign': self.identity_sign,
            'closedness_residual': self.closedness_residual,
            'rederived_plus': self.plus_residual,
            'rederived_minus': self.minus_residual,
            'clform_residual': self.clform_residual,
            'threshold': self.threshold,
            'implication_holds': self.implication,
            'warnings': list(self.warnings),
        }


def prop2_check(frame: FrameField, *, kappa: float = INTEGRABILITY_KAPPA) -> Prop2Result:
    """Невязки тождества η₁∧dη₁ + χ²η₃∧dη₃ = ±d(χη₁∧η₃) и замкнутости χη₁∧η₃.

    Рядом считается выведенная заново форма
    ω±∧dω± = c₁²[η₁∧dη₁ + χ²η₃∧dη₃ ± (χ(η₁∧dη₃ + dη₁∧η₃) − dχ∧η₁∧η₃)].
    Следствие (обе ω± интегрируемы ⟹ обе невязки малы) проверяется,
    только если обе ω± прошли тест Фробениуса.
    """
    grid = frame.grid
    volume = 1.0 / frame.sqrt_det_g()
    x = chi(frame)
    eta1 = SampledForm(1, frame.eta(1), grid, 'eta1')
    eta3 = SampledForm(1, frame.eta(3), grid, 'eta3')
    deta1 = eta1.d()
    deta3 = eta3.d()

    left = eta1.wedge(deta1).components + x * x * eta3.wedge(deta3).components
    form = x[..., None] * np.cross(eta1.components, eta3.components)
    dform = SampledForm(2, form, grid).d().components

    residual_plus = _sup((left - dform) * volume)
    residual_minus = _sup((left + dform) * volume)
    sign = 1 if residual_plus <= residual_minus else -1
    closedness = _sup(dform * volume)

    dchi = SampledForm(0, x, grid).d().components
    cross13 = np.cross(eta1.components, eta3.components)
    mixed = x * (eta1.wedge(deta3).components + eta3.wedge(deta1).components)
    mixed -= np.einsum('...i,...i->...', dchi, cross13)
    values = frame.values
    c1_squared = (values[..., 1] - values[..., 0]) / (values[..., 2] - values[..., 0])
    plus = _sup(c1_squared * (left + mixed) * volume)
    minus = _sup(c1_squared * (left - mixed) * volume)

    c1 = np.sqrt(c1_squared)
    c3 = c1 * x
    omega_plus = c1[..., None] * eta1.components + c3[..., None] * eta3.components
    omega_minus = c1[..., None] * eta1.components - c3[..., None] * eta3.components
    clform = form + 0.5 * (1.0 + x * x)[..., None] * np.cross(omega_plus, omega_minus)
    clform_residual = _sup(np.linalg.norm(clform, axis=-1))

    bound = threshold(grid, kappa)
    implication = None
    if plus <= bound and minus <= bound:
        implication = max(min(residual_plus, residual_minus), closedness) <= bound
    warnings = ()
    if frame.holonomy:
        warnings = ("eigen-coframe signs are not globally consistent; the 2-form χη₁∧η₃ may flip sign",)

    return Prop2Result(
        identity_residual=min(residual_plus, residual_minus),
        identity_sign=sign,
        closedness_residual=closedness,
        plus_residual=plus,
        minus_residual=minus,
        clform_residual=clform_residual,
        form=form,
        dform=dform,
        threshold=bound,
        implication=implication,
        warnings=warnings,
    )


@dataclass(frozen=True)
class DiagCaseResult:
    axis: int
    residual: float
    threshold: float

    @property
    def integrable(self) -> bool:
        return self.residual <= self.threshold


def diag_case_check(
    frame: FrameField, *, tol: float = DIAGONAL_TOL, kappa: float = INTEGRABILITY_KAPPA,
) -> DiagCaseResult:
    """Диагональный S: интегрируемость сводится к ∂χ/∂x_b = 0, b = ось η₂."""
    valid = frame.valid
    operator = frame.operator[valid]
    off = operator.copy()
    off[:, np.arange(DIMENSION), np.arange(DIMENSION)] = 0.0
    scale = np.max(np.abs(operator), axis=(-2, -1))
    if np.any(np.max(np.abs(off), axis=(-2, -1)) > tol * scale):
        raise InapplicableError("S is not diagonal in the coordinate frame")
    axes = np.unique(np.argmax(np.abs(frame.eta(2)[valid]), axis=-1))
    if axes.size != 1:
        raise InapplicableError(f"the λ₂ eigen-direction changes axis across the grid: {axes.tolist()}")
    axis = int(axes[0])
    derivative = frame.grid.partial(chi(frame), axis)
    return DiagCaseResult(axis=axis, residual=_sup(derivative), threshold=threshold(frame.grid, kappa))


@dataclass(frozen=True)
class Prop3Result:
    """∫ ξ₂(log χ) vol по периодической коробке (заменитель замкнутого многообразия)."""

    integral: float
    scale: float
    surrogate: str = 'periodic box'

    @property
    def relative(self) -> float:
        return abs(self.integral) / self.scale if self.scale > 0.0 else 0.0


def prop3_integral(frame: FrameField) -> Prop3Result:
    grid = frame.grid
    if not grid.periodic:
        raise InapplicableError("the volume integral needs a periodic grid")
    if frame.holonomy:
        raise HolonomyError("eigenvector signs cannot be chosen consistently around the torus")
    if frame.masked_count:
        raise InapplicableError(f"{frame.masked_count} masked node(s) on a closed domain")
    log_chi = np.log(chi(frame))
    derivative = np.einsum('...i,...i->...', grid.gradient(log_chi), frame.xi(2))
    weight = frame.sqrt_det_g() * float(np.prod(grid.spacing))
    return Prop3Result(
        integral=float(np.sum(derivative * weight)),
        scale=float(np.sum(np.abs(derivative) * weight)),
    )


# Подвижный репер

def coordinate_frame(cometric: FloatArray) -> FloatArray:
    """Грам–Шмидт координатного базиса ∂₁, ∂₂, ∂₃ относительно g = m⁻¹.

    Столбцы результата E суть eₖ; EᵀgE = I.
    """
    cometric = np.asarray(cometric, dtype=np.float64)
    bad = ~np.all(np.isfinite(cometric), axis=(-2, -1))
    safe = np.where(bad[..., None, None], identity(cometric.shape[:-2]), cometric)
    chol = np.linalg.cholesky(np.linalg.inv(safe))
    frame = np.swapaxes(np.linalg.inv(chol), -1, -2)
    return np.where(bad[..., None, None], np.nan, frame)


def frame_from_expressions(
    texts: Sequence[Sequence[str]], grid: Grid, leaf_axis: int = LEAF_AXIS,
) -> FloatArray:
    """Репер eₖ, заданный тремя наборами выражений от x1, x2, x3 (и t)."""
    if len(texts) != DIMENSION or any(len(column) != DIMENSION for column in texts):
        raise InputError("a frame needs three vector fields with three components each")
    env = coordinate_env(grid.points())
    frame = np.empty((*grid.shape, DIMENSION, DIMENSION))
    invalid = np.zeros(grid.shape, dtype=bool)
    for k, column in enumerate(texts):
        for j, text in enumerate(column):
            values, bad = evaluate_masked(parse_field(text, leaf_axis), env)
            frame[..., j, k] = np.broadcast_to(values, grid.shape)
            invalid |= np.broadcast_to(bad, grid.shape)
    return np.where(invalid[..., None, None], np.nan, frame)


def check_frame(frame: FloatArray, cometric: FloatArray, tol: float = UNIT_TOL) -> None:
    """Проверить ортонормированность репера относительно g = m⁻¹."""
    usable = np.all(np.isfinite(frame), axis=(-2, -1)) & np.all(np.isfinite(cometric), axis=(-2, -1))
    g = np.linalg.inv(cometric[usable])
    e = frame[usable]
    gram = np.swapaxes(e, -1, -2) @ g @ e
    error = np.max(np.abs(gram - np.eye(DIMENSION)), initial=0.0)
    if error > tol:
        raise FrameError(f"frame is not orthonormal: max |EᵀgE − I| = {error:.3e}")


def frame_derivative(values: FloatArray, frame: FloatArray, grid: Grid) -> FloatArray:
    """Производные eₖ(f) всех компонент поля; k в последней оси."""
    values = np.asarray(values, dtype=np.float64)
    trailing = values.shape[len(grid.shape):]
    flat = values.reshape(*grid.shape, -1)
    grads = np.stack([grid.partial(flat, j) for j in range(DIMENSION)], axis=-1)
    result = np.einsum('...nj,...jk->...nk', grads, frame)
    return result.reshape(*grid.shape, *trailing, DIMENSION)


@dataclass(frozen=True)
class StructureFunctions:
    """Cⁱⱼₖ с [eⱼ, eₖ] = Σᵢ Cⁱⱼₖ eᵢ; индексы [i, j, k]."""

    coframe: FloatArray
    commutator: FloatArray

    @property
    def discrepancy(self) -> float:
        return _sup(self.coframe - self.commutator)


def structure_functions(frame: FloatArray, grid: Grid) -> StructureFunctions:
    """Cⁱⱼₖ двумя путями: из dωᵢ = −Σ Cⁱⱼₖ ωⱼ∧ωₖ и из коммутаторов eⱼ, eₖ."""
    bad = ~np.all(np.isfinite(frame), axis=(-2, -1))
    coframe = np.linalg.inv(np.where(bad[..., None, None], identity(grid.shape), frame))
    coframe[bad] = np.nan
    curls = np.stack([SampledForm(1, coframe[..., i, :], grid).d().components for i in range(DIMENSION)], axis=-2)
    pairs = np.cross(frame[..., :, :, None], frame[..., :, None, :], axis=-3)
    from_coframe = -np.einsum('...il,...ljk->...ijk', curls, pairs)

    derivative = np.stack([grid.partial(frame, m) for m in range(DIMENSION)], axis=-3)
    # derivative[..., m, l, k] = ∂_m E[l, k]
    flow = np.einsum('...mj,...mlk->...ljk', frame, derivative)
    brackets = flow - np.swapaxes(flow, -1, -2)
    from_commutators = np.einsum('...il,...ljk->...ijk', coframe, brackets)
    return StructureFunctions(coframe=from_coframe, commutator=from_commutators)


@dataclass
class MovingFrameData:
    """Коэффициенты в ортонормированном репере и их производные вдоль eₖ.

    Массивы индексируются с нуля: a[..., i, j] = aᵢ₊₁ⱼ₊₁,
    derivative_a[..., i, j, k] = eₖ₊₁(aᵢ₊₁ⱼ₊₁), derivative_beta[..., i, k] = eₖ₊₁(βᵢ₊₁).
    """

    grid: Grid
    frame: FloatArray
    coframe: FloatArray
    a: FloatArray
    alpha: FloatArray
    beta: FloatArray
    lam: FloatArray
    mu: FloatArray
    mu_sign: npt.NDArray[np.int_]
    mu_dissent: int
    components: int
    structure: StructureFunctions
    derivative_a: FloatArray
    derivative_mu: FloatArray
    derivative_beta: FloatArray
    derivative_lam: FloatArray
    region_q: FloatArray
    region: npt.NDArray[np.int_]
    anomalies: int
    log: list[str] = field(default_factory=list)

    @property
    def valid(self) -> npt.NDArray[np.bool_]:
        return np.asarray(self.region > 0)

    def region_counts(self) -> dict[int, int]:
        return {r: int(np.count_nonzero(self.region == r)) for r in REGIONS}


def moving_frame_data(
    spectra: FrameField,
    omega: FloatArray,
    frame: FloatArray | None = None,
    *,
    unit_tol: float = UNIT_TOL,
) -> MovingFrameData:
    """Данные подвижного репера для распределения ker ω.

    Знак μ выбирается в каждом узле по меньшей невязке условия
    B(ω) = μ(ω⊙η₂), затем большинством голосов фиксируется в каждой связной
    области допустимых узлов: знаки η₂ в разных областях согласуются независимо.
    """
    grid = spectra.grid
    valid = spectra.valid
    if frame is None:
        frame = coordinate_frame(spectra.cometric)
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape != (*grid.shape, DIMENSION, DIMENSION):
        raise InputError(f"frame has shape {frame.shape}, grid is {grid.shape}")
    check_frame(frame[valid], spectra.cometric[valid], unit_tol)

    eye = identity(grid.shape)
    usable = valid & np.all(np.isfinite(frame), axis=(-2, -1))
    e = np.where(usable[..., None, None], frame, eye)
    coframe = np.linalg.inv(e)
    s_tangent = np.swapaxes(np.where(usable[..., None, None], spectra.operator, eye), -1, -2)
    a = coframe @ s_tangent @ e
    a = 0.5 * (a + np.swapaxes(a, -1, -2))

    omega = np.broadcast_to(np.asarray(omega, dtype=np.float64), (*grid.shape, DIMENSION))
    alpha = np.einsum('...jk,...j->...k', e, np.where(usable[..., None], omega, 1.0))
    alpha /= np.linalg.norm(alpha, axis=-1, keepdims=True)
    beta = np.einsum('...jk,...j->...k', e, np.where(usable[..., None], spectra.eta(2), 0.0))
    values = np.where(usable[..., None], spectra.values, 1.0)
    lam = values[..., 1]
    magnitude = np.sqrt(values[..., 1] - values[..., 0]) * np.sqrt(values[..., 2] - values[..., 1])

    k = spectra.orientation * skew(alpha)
    b = a @ k - k @ a
    p = np.einsum('...i,...j->...ij', alpha, beta) + np.einsum('...i,...j->...ij', beta, alpha)
    res_plus = np.sum((b - magnitude[..., None, None] * p) ** 2, axis=(-2, -1))
    res_minus = np.sum((b + magnitude[..., None, None] * p) ** 2, axis=(-2, -1))
    votes = np.where(res_plus <= res_minus, 1, -1)
    labels, components = connected_components(usable, grid)
    mu_sign = np.zeros(grid.shape, dtype=np.int_)
    for label in range(1, components + 1):
        member = labels == label
        mu_sign[member] = 1 if np.sum(votes[member]) >= 0 else -1
    mu_dissent = int(np.count_nonzero(usable & (votes != mu_sign)))
    mu = mu_sign * magnitude

    hide = ~usable
    a = np.where(hide[..., None, None], np.nan, a)
    beta = np.where(hide[..., None], np.nan, beta)
    lam = np.where(hide, np.nan, lam)
    mu = np.where(hide, np.nan, mu)
    e_nan = np.where(hide[..., None, None], np.nan, e)

    terms = _Terms(a=a, beta=beta, lam=lam, mu=mu)
    region_q = np.stack([terms.region_quantity(r) for r in REGIONS], axis=-1)
    region = np.argmax(np.where(np.isfinite(region_q), region_q, -1.0), axis=-1) + 1
    floor = REGION_FLOOR * np.where(usable, values[..., 2], 1.0) ** 2
    anomaly = usable & (np.max(np.where(np.isfinite(region_q), region_q, 0.0), axis=-1) <= floor)
    region = np.where(usable & ~anomaly, region, 0)

    data = MovingFrameData(
        grid=grid,
        frame=e_nan,
        coframe=np.where(hide[..., None, None], np.nan, coframe),
        a=a,
        alpha=np.where(hide[..., None], np.nan, alpha),
        beta=beta,
        lam=lam,
        mu=mu,
        mu_sign=mu_sign,
        mu_dissent=mu_dissent,
        components=components,
        structure=structure_functions(e_nan, grid),
        derivative_a=frame_derivative(a, e, grid),
        derivative_mu=frame_derivative(mu, e, grid),
        derivative_beta=frame_derivative(beta, e, grid),
        derivative_lam=frame_derivative(lam, e, grid),
        region_q=region_q,
        region=region,
        anomalies=int(np.count_nonzero(anomaly)),
    )
    data.log.append(f"μ sign fixed on {components} component(s); {mu_dissent} node(s) prefer the other sign")
    data.log.append(f"regions {data.region_counts()}")
    if data.anomalies:
        data.log.append(f"{data.anomalies} node(s) belong to no region")
    if data.structure.discrepancy > FINDING_TOL:
        data.log.append(f"structure functions: coframe and commutator routes differ by {data.structure.discrepancy:.3e}")
    return data


class _Terms:
    """Доступ к коэффициентам с индексами, начинающимися с единицы."""

    def __init__(
        self,
        a: FloatArray,
        beta: FloatArray,
        lam: FloatArray,
        mu: FloatArray,
        data: MovingFrameData | None = None,
    ) -> None:
        self._a = a
        self._beta = beta
        self.lam = lam
        self.m = mu
        self._data = data

    @classmethod
    def of(cls, data: MovingFrameData) -> "_Terms":
        return cls(data.a, data.beta, data.lam, data.mu, data)

    def a(self, i: int, j: int) -> FloatArray:
        return self._a[..., i - 1, j - 1]

    def b(self, i: int) -> FloatArray:
        return self._beta[..., i - 1]

    def A(self, k: int, i: int, j: int) -> FloatArray:  # noqa: N802
        """aᵏᵢⱼ = eₖ(aᵢⱼ)."""
        assert self._data is not None
        return self._data.derivative_a[..., i - 1, j - 1, k - 1]

    def B(self, i: int, k: int) -> FloatArray:  # noqa: N802
        """βᵢₖ = eₖ(βᵢ)."""
        assert self._data is not None
        return self._data.derivative_beta[..., i - 1, k - 1]

    def mu(self, k: int) -> FloatArray:
        assert self._data is not None
        return self._data.derivative_mu[..., k - 1]

    def g(self, k: int) -> FloatArray:
        assert self._data is not None
        return self._data.derivative_lam[..., k - 1]

    def C(self, i: int, j: int, k: int) -> FloatArray:  # noqa: N802
        assert self._data is not None
        return self._data.structure.coframe[..., i - 1, j - 1, k - 1]

    def normal(self, region: int) -> list[FloatArray]:
        components = []
        for i, j, sign, b in REGION_NORMALS[region]:
            if sign:
                components.append(self.a(i, j) + sign * self.m * self.b(b))
            else:
                components.append(self.a(i, j) - self.lam)
        return components

    def normal_derivative(self, region: int, c: int, k: int) -> FloatArray:
        """eₖ(n_c) по правилу дифференцирования произведения."""
        i, j, sign, b = REGION_NORMALS[region][c - 1]
        if sign:
            return self.A(k, i, j) + sign * (self.mu(k) * self.b(b) + self.m * self.B(b, k))
        return self.A(k, i, j) - self.g(k)

    def region_quantity(self, region: int) -> FloatArray:
        return sum(
            (self.a(i, j) + sign * self.m * self.b(b)) ** 2
            for i, j, sign, b in REGION_NORMALS[region]
            if sign
        )


def _verbatim_u1(t: _Terms) -> FloatArray:
    a, b, m, lam, A, B, mu, g, C = t.a, t.b, t.m, t.lam, t.A, t.B, t.mu, t.g, t.C
    first = (
        -A(2, 1, 3) + A(1, 2, 3) - b(1) * mu(1) - b(2) * mu(2) - m * B(1, 1) - m * B(2, 2)
        - (a(1, 3) + m * b(2)) * C(1, 1, 2) - (a(2, 3) - m * b(1)) * C(2, 1, 2) - (a(3, 3) - lam) * C(3, 1, 2)
    ) * (a(3, 3) - lam)
    second = (
        -A(3, 1, 3) + A(1, 3, 3) - b(2) * mu(3) - m * B(2, 3) - g(1)
        - (a(1, 3) + m * b(2)) * C(1, 1, 3) - (a(2, 3) - m * b(1)) * C(2, 1, 3) - (a(3, 3) - lam) * C(3, 1, 3)
    ) * (a(2, 3) - m * b(1))
    third = (
        -A(3, 2, 3) + A(2, 3, 3) + b(1) * mu(3) + m * B(1, 3) - g(2)
        - (a(1, 3) + m * b(2)) * C(1, 2, 3) - (a(2, 3) - m * b(1)) * C(2, 2, 3) - (a(3, 3) - lam) * C(3, 2, 3)
    ) * (a(1, 3) + m * b(2))
    return first - second + third


def _verbatim_u2(t: _Terms, corrected: bool = False) -> FloatArray:
    a, b, m, lam, A, B, mu, g, C = t.a, t.b, t.m, t.lam, t.A, t.B, t.mu, t.g, t.C
    first = (
        -A(2, 1, 2) + A(1, 2, 2) + b(3) * mu(2) + m * B(3, 2) - g(1)
        - (a(1, 2) - m * b(3)) * C(1, 1, 2) - (a(2, 2) - lam) * C(2, 1, 2) - (a(2, 3) + m * b(1)) * C(3, 1, 2)
    ) * (a(2, 3) + m * b(1))
    second = (
        -A(3, 1, 2) + A(1, 2, 3) + b(3) * mu(3) + b(1) * mu(1) + m * B(3, 3) + m * B(1, 1)
        - (a(1, 2) - m * b(3)) * C(1, 1, 3) - (a(2, 2) - lam) * C(2, 1, 3) - (a(2, 3) + m * b(1)) * C(3, 1, 3)
    ) * (a(2, 2) - lam)
    factor = a(1, 2) - m * (b(3) if corrected else b(1))
    third = (
        -A(3, 2, 2) + A(2, 2, 3) + b(1) * mu(2) + m * B(1, 2) + g(3)
        - (a(1, 2) - m * b(3)) * C(1, 2, 3) - (a(2, 2) - lam) * C(2, 2, 3) - (a(2, 3) + m * b(1)) * C(3, 2, 3)
    ) * factor
    return first - second + third


def _verbatim_u3(t: _Terms, corrected: bool = False) -> FloatArray:
    a, b, m, lam, A, B, mu, g, C = t.a, t.b, t.m, t.lam, t.A, t.B, t.mu, t.g, t.C
    first = (
        -A(2, 1, 1) + A(1, 1, 2) + b(3) * mu(1) + m * B(3, 1) + g(2)
        - (a(1, 1) - lam) * C(1, 1, 2) - (a(1, 2) + m * b(3)) * C(2, 1, 2) - (a(1, 3) - m * b(2)) * C(3, 1, 2)
    ) * (a(1, 3) - m * b(2))
    second = (
        -A(3, 1, 1) + A(1, 1, 3) - b(2) * mu(1) - m * B(2, 1) + g(3)
        - (a(1, 1) - lam) * C(1, 1, 3) - (a(1, 2) + m * b(3)) * C(2, 1, 3) - (a(1, 3) - m * b(2)) * C(3, 1, 3)
    ) * (a(1, 2) + m * b(3))
    if corrected:
        bracket = -(a(1, 1) - lam) * C(1, 2, 3) - (a(1, 2) + m * b(3)) * C(2, 2, 3)
    else:
        bracket = -(a(1, 1) - lam) * C(1, 1, 2) - (a(2, 3) + m * b(3)) * C(2, 2, 3)
    third = (
        -A(3, 1, 2) + A(2, 1, 3) - b(2) * mu(2) - b(3) * mu(3) - m * B(2, 2) - m * B(3, 3)
        + bracket - (a(1, 3) - m * b(2)) * C(3, 2, 3)
    ) * (a(1, 1) - lam)
    return first - second + third


def _expanded(t: _Terms, region: int) -> FloatArray:
    """n∧dn для нормального поля области через F_jk = eⱼ(n_k) − eₖ(nⱼ) − Σ nᵢCⁱⱼₖ."""
    n = t.normal(region)

    def f(j: int, k: int) -> FloatArray:
        value = t.normal_derivative(region, k, j) - t.normal_derivative(region, j, k)
        return value - sum(n[i - 1] * t.C(i, j, k) for i in REGIONS)

    return n[0] * f(2, 3) - n[1] * f(1, 3) + n[2] * f(1, 2)


@dataclass(frozen=True)
class NormalField:
    """Нормальное поле в компонентах корепера и его связь с ω."""

    components: FloatArray
    covector: FloatArray
    parallel: FloatArray

    @property
    def parallel_sup(self) -> float:
        return _sup(self.parallel)


def normal_field_directions(data: MovingFrameData) -> NormalField:
    """Нормаль к D по формулам для областей U₁, U₂, U₃.

    ``covector`` задан в координатах, имеет единичную длину и согласован по
    знаку с ω; ``parallel`` есть |n × α|/(|n||α|).
    """
    terms = _Terms.of(data)
    normals = np.stack([np.stack(terms.normal(r), axis=-1) for r in REGIONS], axis=-2)
    index = np.clip(data.region - 1, 0, 2)
    n = np.take_along_axis(normals, index[..., None, None], axis=-2)[..., 0, :]
    n = np.where(data.valid[..., None], n, np.nan)
    length = np.linalg.norm(n, axis=-1)
    parallel = np.linalg.norm(np.cross(n, data.alpha), axis=-1) / (length * np.linalg.norm(data.alpha, axis=-1))
    unit = n / length[..., None]
    unit *= np.where(np.einsum('...i,...i->...', unit, data.alpha) < 0.0, -1.0, 1.0)[..., None]
    covector = np.einsum('...ij,...i->...j', data.coframe, unit)
    return NormalField(components=n, covector=covector, parallel=parallel)


@dataclass(frozen=True)
class MovingFrameResiduals:
    """Невязки условий интегрируемости в подвижном репере по областям."""

    verbatim: FloatArray
    corrected: FloatArray
    expanded: FloatArray
    region: npt.NDArray[np.int_]
    normal: NormalField
    frobenius: FrobeniusResult
    threshold: float
    findings: tuple[str, ...]

    def sup_by_region(self, values: FloatArray) -> dict[int, float]:
        return {r: _sup(np.where(self.region == r, values, np.nan)) for r in REGIONS}

    @property
    def integrable(self) -> bool:
        return _sup(self.corrected) <= self.threshold

    @property
    def agrees_with_frobenius(self) -> bool:
        return self.integrable == self.frobenius.integrable

    def summary(self) -> dict[str, object]:
        return {
            'verbatim': {f'U{r}': v for r, v in self.sup_by_region(self.verbatim).items()},
            'corrected': {f'U{r}': v for r, v in self.sup_by_region(self.corrected).items()},
            'expanded': {f'U{r}': v for r, v in self.sup_by_region(self.expanded).items()},
            'normal_parallel_sup': self.normal.parallel_sup,
            'normal_frobenius_sup': self.frobenius.sup,
            'threshold': self.threshold,
            'integrable': self.integrable,
            'agrees_with_frobenius': self.agrees_with_frobenius,
            'findings': list(self.findings),
        }


def moving_frame_residuals(
    data: MovingFrameData, *, kappa: float = INTEGRABILITY_KAPPA,
) -> MovingFrameResiduals:
    """Три условия интегрируемости: дословно, с исправлениями и через n∧dn.

    Каждое значение делится на |n|², так что невязки сравнимы с |ω∧dω|
    для единичного ω.
    """
    terms = _Terms.of(data)
    region = data.region
    verbatim_by_region = {1: _verbatim_u1(terms), 2: _verbatim_u2(terms), 3: _verbatim_u3(terms)}
    corrected_by_region = {
        1: verbatim_by_region[1],
        2: _verbatim_u2(terms, corrected=True),
        3: _verbatim_u3(terms, corrected=True),
    }
    expanded_by_region = {r: _expanded(terms, r) for r in REGIONS}

    def select(by_region: dict[int, FloatArray]) -> FloatArray:
        result = np.full(data.grid.shape, np.nan)
        for r in REGIONS:
            n = np.stack(terms.normal(r), axis=-1)
            scale = np.sum(n * n, axis=-1)
            inside = region == r
            result[inside] = np.abs(by_region[r][inside]) / scale[inside]
        return result

    verbatim = select(verbatim_by_region)
    corrected = select(corrected_by_region)
    expanded = select(expanded_by_region)

    normal = normal_field_directions(data)
    cometric = data.frame @ np.swapaxes(data.frame, -1, -2)
    frobenius = frobenius_residual(normal.covector, data.grid, cometric, kappa=kappa, label='normal')

    findings = []
    for r in REGIONS:
        inside = region == r
        if not inside.any():
            continue
        gap = _sup(np.where(inside, verbatim - expanded, np.nan))
        if gap > FINDING_TOL * max(1.0, _sup(np.where(inside, expanded, np.nan))):
            findings.append(f"U{r}: verbatim condition differs from the n∧dn expansion by {gap:.3e}")
        drift = _sup(np.where(inside, corrected - expanded, np.nan))
        if drift > FINDING_TOL * max(1.0, _sup(np.where(inside, expanded, np.nan))):
            findings.append(f"U{r}: corrected condition still differs from the n∧dn expansion by {drift:.3e}")

    return MovingFrameResiduals(
        verbatim=verbatim,
        corrected=corrected,
        expanded=expanded,
        region=region,
        normal=normal,
        frobenius=frobenius,
        threshold=threshold(data.grid, kappa),
        findings=tuple(findings),
    )


# Сводный отчёт

@dataclass
class DistributionReport:
    label: str
    frobenius: FrobeniusResult
    moving_frame: MovingFrameResiduals | None
    log: list[str] = field(default_factory=list)

    def summary(self) -> dict[str, object]:
        result: dict[str, object] = {'frobenius': self.frobenius.summary()}
        if self.moving_frame is not None:
            result['moving_frame'] = self.moving_frame.summary()
        return result


@dataclass
class IntegrabilityReport:
    """Результаты всех проверок интегрируемости для одного поля кореперов."""

    distributions: dict[str, DistributionReport]
    chi: FloatArray
    prop2: Prop2Result
    diag: DiagCaseResult | None
    prop3: Prop3Result | None
    notes: list[str] = field(default_factory=list)

    def verdicts(self) -> dict[str, bool]:
        return {label: d.frobenius.integrable for label, d in self.distributions.items()}

    def summary(self) -> dict[str, object]:
        result: dict[str, object] = {
            'distributions': {label: d.summary() for label, d in self.distributions.items()},
            'prop2': self.prop2.summary(),
            'notes': list(self.notes),
        }
        if self.diag is not None:
            result['diag'] = {
                'axis': self.diag.axis + 1,
                'residual': self.diag.residual,
                'threshold': self.diag.threshold,
                'integrable': self.diag.integrable,
            }
        if self.prop3 is not None:
            result['prop3'] = {
                'integral': self.prop3.integral,
                'relative': self.prop3.relative,
                'surrogate': self.prop3.surrogate,
            }
        return result


def integrability_report(
    frame: FrameField,
    omegas: dict[str, FloatArray],
    moving: FloatArray | None = None,
    *,
    kappa: float = INTEGRABILITY_KAPPA,
    unit_tol: float = UNIT_TOL,
) -> IntegrabilityReport:
    """Все проверки для распределений ker ω по набору ω."""
    notes: list[str] = []
    distributions = {}
    for label, omega in omegas.items():
        frobenius = frobenius_residual(omega, frame.grid, frame.cometric, kappa=kappa, label=label)
        data = moving_frame_data(frame, omega, moving, unit_tol=unit_tol)
        report = DistributionReport(label, frobenius, moving_frame_residuals(data, kappa=kappa), list(data.log))
        distributions[label] = report

    diag = None
    try:
        diag = diag_case_check(frame, kappa=kappa)
    except InapplicableError as exc:
        notes.append(f"diagonal case skipped: {exc}")

    prop3 = None
    if frame.grid.periodic:
        try:
            prop3 = prop3_integral(frame)
        except (InapplicableError, HolonomyError) as exc:
            notes.append(f"volume integral refused: {exc}")
    if frame.holonomy:
        notes.append("holonomy flag set on the eigen-coframe")

    return IntegrabilityReport(
        distributions=distributions,
        chi=chi(frame),
        prop2=prop2_check(frame, kappa=kappa),
        diag=diag,
        prop3=prop3,
        notes=notes,
    )
