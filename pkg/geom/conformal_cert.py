"""The conformal pair ω± and per-node conformality certificates of a map on ker ω.

Three tests are run at every node and must agree: the commutator condition
B(ω) = μ·(ω⊙η₂), nilpotency A(ω)³ = 0, and direct sampling of
|φ∗v|²/|v|² over unit directions v in ker ω. All three are computed in the
m-orthonormal coframe obtained from the Cholesky factor of the cotangent
metric.
"""

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
import numpy.typing as npt

from .errors import NonUnitCovectorError, RepeatedEigenvalueError
from .grid import DIMENSION, Grid
from .pullback import FrameField, MetricField, SmoothMap, frame_field
from .tensor3 import (
    TINY,
    FloatArray,
    commutator,
    identity,
    inner,
    operator_to_orthonormal,
    rot,
    skew,
    star_iota,
    to_orthonormal,
)

CERT_TOL = 1e-8
BAND_FACTOR = 10.0
SAMPLE_DIRECTIONS = 16
A_FLOOR = 1e-14
DEFAULT_SEED = 0

BAND_PASS = 'pass'
BAND_FAIL = 'fail'
BAND_INDETERMINATE = 'indeterminate'

VERDICT_CONFORMAL = 'conformal'
VERDICT_NOT_CONFORMAL = 'not_conformal'
VERDICT_INDETERMINATE = 'indeterminate'
VERDICT_MASKED = 'masked'

CONDITIONS = ('condition2', 'condition3', 'sampled')


class Spectra(Protocol):
    """Всё, что несёт собственные значения и собственный корепер."""

    values: FloatArray
    covectors: FloatArray


@dataclass(frozen=True)
class ConformalPair:
    """ω± = c₁η₁ ± c₃η₃ и их коэффициенты."""

    plus: FloatArray
    minus: FloatArray
    c1: FloatArray
    c3: FloatArray


def omega_pm(spectra: Spectra) -> ConformalPair:
    """Пара ковекторов, ядра которых высекают окружности на эллипсоиде ⟨Sv, v⟩ = 1."""
    values = np.asarray(spectra.values, dtype=np.float64)
    eta = np.asarray(spectra.covectors, dtype=np.float64)
    low = values[..., 1] - values[..., 0]
    high = values[..., 2] - values[..., 1]
    defined = np.isfinite(low) & np.isfinite(high)
    if np.any(defined & ((low <= 0.0) | (high <= 0.0))):
        raise RepeatedEigenvalueError("ω± need three distinct eigenvalues")
    span = values[..., 2] - values[..., 0]
    c1 = np.sqrt(low / span)
    c3 = np.sqrt(high / span)
    first = c1[..., None] * eta[..., :, 0]
    third = c3[..., None] * eta[..., :, 2]
    return ConformalPair(plus=first + third, minus=first - third, c1=c1, c3=c3)


def b_op(s: FloatArray, omega: FloatArray, m: FloatArray | None = None, orientation: int = 1) -> FloatArray:
    """B(ω) = [S, ∗ι(ω)]."""
    return commutator(np.asarray(s, dtype=np.float64), star_iota(omega, m, orientation))


def a_op(s: FloatArray, omega: FloatArray, m: FloatArray | None = None, orientation: int = 1) -> FloatArray:
    """A(ω) = [S, Rot(ω)] для единичного ω."""
    return commutator(np.asarray(s, dtype=np.float64), rot(np.pi / 2.0, omega, m, orientation))


def a_op_expanded(
    s: FloatArray, omega: FloatArray, m: FloatArray | None = None, orientation: int = 1,
) -> FloatArray:
    """Та же A(ω) через B: B + ∗ι(ω)B + B∗ι(ω)."""
    b = b_op(s, omega, m, orientation)
    k = star_iota(omega, m, orientation)
    return b + k @ b + b @ k


def band(residual: FloatArray, tol: float = CERT_TOL) -> npt.NDArray[np.str_]:
    """Полосы: меньше tol проходит, больше 10·tol не проходит, между ними не решено."""
    residual = np.asarray(residual, dtype=np.float64)
    return np.where(
        residual < tol,
        BAND_PASS,
        np.where(residual > BAND_FACTOR * tol, BAND_FAIL, BAND_INDETERMINATE),
    ).astype('<U13')


def sample_offset(seed: int, directions: int) -> float:
    """Общий поворот набора направлений; счётчиковый генератор Philox."""
    rng = np.random.Generator(np.random.Philox(seed))
    return float(rng.uniform(0.0, 2.0 * np.pi / directions))


def _frobenius(a: FloatArray) -> FloatArray:
    return np.sqrt(np.sum(a * a, axis=(-2, -1)))


@dataclass
class CertField:
    """Сертификаты по узлам решётки."""

    grid: Grid
    omega: FloatArray
    mu_fit: FloatArray
    mu_expected: FloatArray
    condition2: FloatArray
    condition3: FloatArray
    sampled: FloatArray
    orthogonality: FloatArray
    bands: dict[str, npt.NDArray[np.str_]]
    verdict: npt.NDArray[np.str_]
    sign_changes: int
    disagreements: int
    seed: int
    directions: int
    tol: float
    log: list[str] = field(default_factory=list)

    @property
    def valid(self) -> npt.NDArray[np.bool_]:
        return np.asarray(self.verdict != VERDICT_MASKED)

    def count(self, verdict: str) -> int:
        return int(np.count_nonzero(self.verdict == verdict))

    @property
    def overall(self) -> str:
        """Общий вердикт по немаскированным узлам."""
        verdicts = set(np.unique(self.verdict[self.valid]).tolist())
        if not verdicts:
            return VERDICT_MASKED
        if verdicts == {VERDICT_CONFORMAL}:
            return VERDICT_CONFORMAL
        if VERDICT_NOT_CONFORMAL in verdicts:
            return VERDICT_NOT_CONFORMAL
        return VERDICT_INDETERMINATE

    def mu_mismatch(self) -> float:
        """max ||μ_fit| − μ_expected|/μ_expected по конформным узлам."""
        conformal = self.verdict == VERDICT_CONFORMAL
        if not conformal.any():
            return 0.0
        gap = np.abs(np.abs(self.mu_fit) - self.mu_expected) / self.mu_expected
        return float(np.max(gap[conformal]))

    def summary(self) -> dict[str, object]:
        def sup(values: FloatArray) -> float:
            finite = values[self.valid]
            return float(np.max(finite)) if finite.size else 0.0

        return {
            'verdict': self.overall,
            'nodes': {
                VERDICT_CONFORMAL: self.count(VERDICT_CONFORMAL),
                VERDICT_NOT_CONFORMAL: self.count(VERDICT_NOT_CONFORMAL),
                VERDICT_INDETERMINATE: self.count(VERDICT_INDETERMINATE),
                VERDICT_MASKED: self.count(VERDICT_MASKED),
            },
            'condition2_max': sup(self.condition2),
            'condition3_max': sup(self.condition3),
            'sampled_max': sup(self.sampled),
            'mu_relative_mismatch': self.mu_mismatch(),
            'mu_sign_changes': self.sign_changes,
            'disagreements': self.disagreements,
            'seed': self.seed,
            'directions': self.directions,
        }


def certify_frame(
    spectra: FrameField,
    omega: FloatArray,
    *,
    cert_tol: float = CERT_TOL,
    directions: int = SAMPLE_DIRECTIONS,
    seed: int = DEFAULT_SEED,
) -> CertField:
    """Сертифицировать конформность на ker ω по готовому полю спектральных данных.

    ω нормируется в каждом узле (ядро от этого не меняется); нулевой ω
    отвергается.
    """
    grid = spectra.grid
    omega = np.broadcast_to(np.asarray(omega, dtype=np.float64), (*grid.shape, DIMENSION))
    valid = spectra.valid & np.all(np.isfinite(omega), axis=-1)
    eye = identity(grid.shape)

    cometric = np.where(valid[..., None, None], spectra.cometric, eye)
    s = np.where(valid[..., None, None], spectra.operator, eye)
    values = np.where(valid[..., None], spectra.values, 1.0)
    eta2 = np.where(valid[..., None], spectra.eta(2), 0.0)
    omega_safe = np.where(valid[..., None], omega, 1.0)

    length = np.sqrt(np.maximum(inner(omega_safe, omega_safe, cometric), 0.0))
    if np.any(valid & (length <= TINY)):
        raise NonUnitCovectorError("ω vanishes at a grid node")
    omega_unit = omega_safe / length[..., None]

    chol = np.linalg.cholesky(cometric)
    a = to_orthonormal(omega_unit, chol)
    e = to_orthonormal(eta2, chol)
    s_bar = operator_to_orthonormal(s, chol)
    s_bar = 0.5 * (s_bar + np.swapaxes(s_bar, -1, -2))

    k = spectra.orientation * skew(a)
    b = s_bar @ k - k @ s_bar
    p = np.einsum('...i,...j->...ij', a, e) + np.einsum('...i,...j->...ij', e, a)
    mu_fit = np.sum(b * p, axis=(-2, -1)) / np.maximum(np.sum(p * p, axis=(-2, -1)), TINY)
    condition2 = _frobenius(b - mu_fit[..., None, None] * p) / np.maximum(_frobenius(b), A_FLOOR)

    rotation = eye + k + k @ k
    a_matrix = s_bar @ rotation - rotation @ s_bar
    condition3 = _frobenius(a_matrix @ a_matrix @ a_matrix) / np.maximum(_frobenius(a_matrix) ** 3, A_FLOOR)

    helper = np.eye(DIMENSION)[np.argmin(np.abs(a), axis=-1)]
    u = np.cross(a, helper)
    u /= np.linalg.norm(u, axis=-1, keepdims=True)
    v = np.cross(a, u)
    angles = sample_offset(seed, directions) + 2.0 * np.pi * np.arange(directions) / directions
    d = np.cos(angles)[:, None] * u[..., None, :] + np.sin(angles)[:, None] * v[..., None, :]
    ratios = np.einsum('...ni,...ij,...nj->...n', d, s_bar, d)
    lam = values[..., 1]
    sampled = np.max(np.abs(ratios - lam[..., None]), axis=-1) / lam

    mu_expected = np.sqrt(values[..., 1] - values[..., 0]) * np.sqrt(values[..., 2] - values[..., 1])
    orthogonality = np.abs(np.sum(a * e, axis=-1))

    residuals = {'condition2': condition2, 'condition3': condition3, 'sampled': sampled}
    bands = {name: np.where(valid, band(residuals[name], cert_tol), VERDICT_MASKED) for name in CONDITIONS}
    passing = np.stack([bands[name] == BAND_PASS for name in CONDITIONS])
    failing = np.stack([bands[name] == BAND_FAIL for name in CONDITIONS])
    verdict = np.full(grid.shape, VERDICT_INDETERMINATE, dtype='<U13')
    verdict[np.all(passing, axis=0)] = VERDICT_CONFORMAL
    verdict[np.all(failing, axis=0)] = VERDICT_NOT_CONFORMAL
    verdict[~valid] = VERDICT_MASKED
    disagreements = int(np.count_nonzero(valid & np.any(passing, axis=0) & np.any(failing, axis=0)))

    hide = ~valid
    cert = CertField(
        grid=grid,
        omega=np.where(hide[..., None], np.nan, omega_unit),
        mu_fit=np.where(hide, np.nan, mu_fit),
        mu_expected=np.where(hide, np.nan, mu_expected),
        condition2=np.where(hide, np.nan, condition2),
        condition3=np.where(hide, np.nan, condition3),
        sampled=np.where(hide, np.nan, sampled),
        orthogonality=np.where(hide, np.nan, orthogonality),
        bands=bands,
        verdict=verdict,
        sign_changes=sign_changes(mu_fit, verdict == VERDICT_CONFORMAL, grid),
        disagreements=disagreements,
        seed=seed,
        directions=directions,
        tol=cert_tol,
    )
    cert.log.append(
        f"certified {int(np.count_nonzero(valid))} node(s): "
        f"{cert.count(VERDICT_CONFORMAL)} conformal, {cert.count(VERDICT_NOT_CONFORMAL)} not conformal"
    )
    if disagreements:
        cert.log.append(f"conditions disagree at {disagreements} node(s)")
    if cert.sign_changes:
        cert.log.append(f"μ_fit changes sign across {cert.sign_changes} lattice edge(s)")
    return cert


def certify(
    phi: SmoothMap,
    g: MetricField,
    h: MetricField,
    omega: FloatArray,
    grid: Grid,
    **options: object,
) -> CertField:
    """Сертификаты для отображения, заданного выражениями."""
    spectral_options = {key: options.pop(key) for key in ('gap_tol', 'jacobian_tol', 'anchor', 'orientation')
                        if key in options}
    spectra = frame_field(phi, g, h, grid, **spectral_options)  # type: ignore[arg-type]
    return certify_frame(spectra, omega, **options)  # type: ignore[arg-type]


def sign_changes(mu: FloatArray, mask: npt.NDArray[np.bool_], grid: Grid) -> int:
    """Число рёбер решётки между узлами mask, где μ меняет знак; на торе со швом."""
    sign = np.sign(mu)
    changes = 0
    for k in range(DIMENSION):
        if grid.periodic:
            both = mask & np.roll(mask, -1, axis=k)
            changes += int(np.count_nonzero(both & (sign != np.roll(sign, -1, axis=k))))
        else:
            p, q = grid.neighbour_pairs(k)
            changes += int(np.count_nonzero(mask[p] & mask[q] & (sign[p] != sign[q])))
    return changes
