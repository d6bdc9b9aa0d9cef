"""Pipeline stages: analyze → certify → integrability → isothermal → holomorphy."""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import numpy.typing as npt

from geom.beltrami import (
    FoliatedChart,
    HolomorphyReport,
    foliated_isothermal,
    leaf_axes,
    leafwise_holomorphy,
    metric_gram,
    pullback_gram,
)
from geom.conformal_cert import VERDICT_MASKED, certify_frame, omega_pm
from geom.convergence import RefinementStudy, refinement_study
from geom.grid import Grid
from geom.integrability import frame_from_expressions, frobenius_residual, integrability_report
from geom.pullback import (
    COORDINATES,
    Box,
    FrameField,
    MetricField,
    SmoothMap,
    coordinate_env,
    frame_field,
    parse_field,
)
from lang.evaluator import evaluate_masked

from .config import RunConfig

SCHEMA_VERSION = 1
RUN_LOG_MAX_LEN = 1000
RUN_LOG_TRIM_TO = 500
SLICE_AXIS = 2


@dataclass(frozen=True)
class PlotField:
    """Двумерный срез поля для рисунков."""

    name: str
    kind: str
    extent: tuple[float, float, float, float]
    values: npt.NDArray[np.float64]
    labels: tuple[str, str] = ('x1', 'x2')


@dataclass
class Report:
    stage: str
    summary: dict[str, object]
    records: list[dict[str, object]] = field(default_factory=list)
    fields: list[PlotField] = field(default_factory=list)
    rows: npt.NDArray[np.float64] | None = None
    mismatches: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches


def _index_slice(grid: Grid, axis: int = SLICE_AXIS) -> tuple[tuple[int, int], tuple[float, float, float, float], int]:
    a, b = leaf_axes(axis)
    extent = (grid.lower[a], grid.upper[a], grid.lower[b], grid.upper[b])
    return (a, b), extent, grid.shape[axis] // 2


def scalar_slice(name: str, grid: Grid, values: npt.NDArray[np.float64], axis: int = SLICE_AXIS) -> PlotField:
    (a, b), extent, middle = _index_slice(grid, axis)
    return PlotField(name, 'scalar', extent, np.take(values, middle, axis=axis), (COORDINATES[a], COORDINATES[b]))


def vector_slice(name: str, grid: Grid, values: npt.NDArray[np.float64], axis: int = SLICE_AXIS) -> PlotField:
    (a, b), extent, middle = _index_slice(grid, axis)
    plane = np.take(values, middle, axis=axis)
    return PlotField(name, 'vector', extent, plane[..., [a, b]], (COORDINATES[a], COORDINATES[b]))


def _dilatation(chart: FoliatedChart) -> float:
    return max((r.dilatation for r in chart.isothermal if r is not None), default=0.0)


def _masked_word(masked: int, size: int) -> str:
    if masked == 0:
        return 'none'
    return 'all' if masked == size else 'some'


class Pipeline:
    """Стадии одного запуска с общим журналом и кешем полей кореперов."""

    def __init__(self, config: RunConfig) -> None:
        self.config = config
        self.run_log: list[str] = []
        self._frames: dict[int, FrameField] = {}
        box = Box(*config.domain)
        self.phi = SmoothMap.from_text(config.phi, box, config.leaf_axis)
        self.g = MetricField.from_text(config.metric_g, config.leaf_axis)
        self.h = MetricField.from_text(config.metric_h, config.leaf_axis)

    def note(self, message: str) -> None:
        self.run_log.append(message)
        # Ограничиваем размер журнала
        if len(self.run_log) > RUN_LOG_MAX_LEN:
            self.run_log = self.run_log[-RUN_LOG_TRIM_TO:]

    def grid(self, level: int = 0) -> Grid:
        return self.config.grid.build(level)

    def leaf_grid(self, level: int) -> Grid:
        """Измельчение только вдоль осей листа."""
        base = self.grid()
        shape = list(base.shape)
        for k in leaf_axes(self.config.leaf_axis):
            for _ in range(level):
                shape[k] = 2 * shape[k] if base.periodic else 2 * shape[k] - 1
        return Grid(base.lower, base.upper, (shape[0], shape[1], shape[2]), base.periodic)

    def frame(self, level: int = 0) -> FrameField:
        if level not in self._frames:
            tol = self.config.tolerances
            frame = frame_field(
                self.phi, self.g, self.h, self.grid(level),
                gap_tol=tol.spectral_gap_tol,
                jacobian_tol=tol.jacobian_tol,
                self_adjoint_tol=tol.self_adjoint_tol,
                anchor=self.config.grid.anchor if level == 0 else (0, 0, 0),
            )
            for line in frame.log:
                self.note(line)
            self._frames[level] = frame
        return self._frames[level]

    def omegas(self, frame: FrameField) -> dict[str, npt.NDArray[np.float64]]:
        """ω₊, ω₋ и, если задан, пользовательский ω."""
        pair = omega_pm(frame)
        result = {'plus': pair.plus, 'minus': pair.minus}
        if self.config.omega is not None:
            env = coordinate_env(frame.grid.points())
            columns = []
            for text in self.config.omega:
                values, bad = evaluate_masked(parse_field(text, self.config.leaf_axis), env)
                columns.append(np.where(bad, np.nan, np.broadcast_to(values, frame.grid.shape)))
            result['omega'] = np.stack(columns, axis=-1)
        return result

    def moving_frame(self, grid: Grid) -> npt.NDArray[np.float64] | None:
        if self.config.frame is None:
            return None
        return frame_from_expressions(self.config.frame, grid, self.config.leaf_axis)

    def study(self, measure: Callable[[int], float], spacing: Callable[[int], float]) -> RefinementStudy:
        levels = range(self.config.refine + 1)
        return refinement_study([spacing(k) for k in levels], [measure(k) for k in levels])

    # Стадии

    def analyze(self) -> Report:
        frame = self.frame()
        grid = frame.grid
        pair = omega_pm(frame)
        masked = frame.masked_count
        points = grid.points()
        records = []
        for index in np.ndindex(grid.shape):
            record: dict[str, object] = {
                'node': list(index),
                'x': points[index].tolist(),
                'reason': str(frame.reasons[index]),
            }
            if frame.valid[index]:
                record.update({
                    'eigenvalues': frame.values[index].tolist(),
                    'eta': frame.covectors[index].T.tolist(),
                    'gap': float(frame.gap[index]),
                    'omega_plus': pair.plus[index].tolist(),
                    'omega_minus': pair.minus[index].tolist(),
                })
            records.append(record)

        valid = frame.valid
        summary: dict[str, object] = {
            'nodes': grid.size,
            'masked': masked,
            'reasons': frame.reason_counts(),
            'holonomy': frame.holonomy,
            'components': frame.components,
            'sign_flips': frame.flips,
        }
        if valid.any():
            summary['eigenvalue_range'] = [
                [float(np.min(frame.values[valid][:, k])), float(np.max(frame.values[valid][:, k]))]
                for k in range(3)
            ]
            summary['gap_min'] = float(np.min(frame.gap[valid]))
        mismatches = []
        expected = self.config.expect.masked
        if expected is not None and expected != _masked_word(masked, grid.size):
            mismatches.append(f"masked nodes: expected {expected}, got {_masked_word(masked, grid.size)}")
        self.note(f"analyze: {masked} of {grid.size} node(s) masked")
        fields = [
            scalar_slice('gap', grid, frame.gap),
            vector_slice('omega_plus', grid, pair.plus),
            vector_slice('omega_minus', grid, pair.minus),
        ]
        return Report('analyze', summary, records, fields, mismatches=mismatches)

    def certify(self) -> Report:
        frame = self.frame()
        tol = self.config.tolerances
        summary: dict[str, object] = {}
        records: list[dict[str, object]] = []
        fields = []
        mismatches = []
        for label, omega in self.omegas(frame).items():
            cert = certify_frame(
                frame, omega,
                cert_tol=tol.cert_tol,
                directions=tol.sample_directions,
                seed=self.config.seed,
            )
            for line in cert.log:
                self.note(f"certify {label}: {line}")
            summary[label] = cert.summary()
            for index in np.ndindex(frame.grid.shape):
                if cert.verdict[index] == VERDICT_MASKED:
                    records.append({'omega': label, 'node': list(index), 'verdict': VERDICT_MASKED})
                    continue
                records.append({
                    'omega': label,
                    'node': list(index),
                    'verdict': str(cert.verdict[index]),
                    'condition2': float(cert.condition2[index]),
                    'condition3': float(cert.condition3[index]),
                    'sampled': float(cert.sampled[index]),
                    'mu_fit': float(cert.mu_fit[index]),
                    'mu_expected': float(cert.mu_expected[index]),
                })
            fields.append(scalar_slice(f'condition3_{label}', frame.grid, cert.condition3))
            expected = self.config.expect.certify.get(label)
            if expected is not None and expected != cert.overall:
                mismatches.append(f"certify {label}: expected {expected}, got {cert.overall}")
        return Report('certify', summary, records, fields, mismatches=mismatches)

    def integrability(self) -> Report:
        frame = self.frame()
        tol = self.config.tolerances
        if not frame.valid.any():
            self.note("integrability: no valid nodes")
            return Report('integrability', {'skipped': 'no valid nodes'},
                          mismatches=self._missing(self.config.expect.integrable))
        omegas = self.omegas(frame)
        report = integrability_report(
            frame, omegas, self.moving_frame(frame.grid),
            kappa=tol.integrability_kappa,
            unit_tol=tol.unit_tol,
        )
        for label, distribution in report.distributions.items():
            for line in distribution.log:
                self.note(f"integrability {label}: {line}")
        for line in report.notes:
            self.note(f"integrability: {line}")
        summary = report.summary()
        if self.config.refine:
            studies = {}
            for label in omegas:
                def measure(level: int, label: str = label) -> float:
                    refined = self.frame(level)
                    return frobenius_residual(
                        self.omegas(refined)[label], refined.grid, refined.cometric,
                        kappa=tol.integrability_kappa, label=label,
                    ).sup
                studies[label] = self.study(measure, lambda level: self.grid(level).h).as_dict()
            summary['refinement'] = studies

        mismatches = []
        verdicts = report.verdicts()
        for label, expected in self.config.expect.integrable.items():
            if label not in verdicts:
                mismatches.append(f"integrable {label}: no such distribution")
            elif verdicts[label] != expected:
                mismatches.append(f"integrable {label}: expected {expected}, got {verdicts[label]}")
        expected_diag = self.config.expect.diag_integrable
        if expected_diag is not None:
            if report.diag is None:
                mismatches.append("diag_integrable: diagonal case not applicable")
            elif report.diag.integrable != expected_diag:
                mismatches.append(f"diag_integrable: expected {expected_diag}, got {report.diag.integrable}")

        fields = [
            scalar_slice(f'frobenius_{label}', frame.grid, d.frobenius.residual)
            for label, d in report.distributions.items()
        ]
        fields.append(scalar_slice('chi', frame.grid, report.chi))
        return Report('integrability', summary, fields=fields, mismatches=mismatches)

    def _chart(self, gram: npt.NDArray[np.float64], grid: Grid) -> FoliatedChart:
        tol = self.config.tolerances
        return foliated_isothermal(
            gram, grid,
            leaf_axis=self.config.leaf_axis,
            anchors=self.config.anchors,
            k_max=tol.k_max,
            rtol=tol.solver_rtol,
        )

    def _charts(self, grid: Grid) -> tuple[FoliatedChart, FoliatedChart]:
        return self._chart(metric_gram(self.g, grid), grid), self._chart(pullback_gram(self.phi, self.h, grid), grid)

    def isothermal(self) -> Report:
        tol = self.config.tolerances
        grid = self.grid()
        source, pulled = self._charts(grid)
        for chart, label in ((source, 'source'), (pulled, 'pullback')):
            for line in chart.log:
                self.note(f"isothermal {label}: {line}")
        summary: dict[str, object] = {'source': source.summary(), 'pullback': pulled.summary()}
        passed = all(not chart.masked and _dilatation(chart) <= tol.iso_tol for chart in (source, pulled))
        summary['isothermal'] = passed
        if self.config.refine:
            def measure(level: int) -> float:
                return max(_dilatation(chart) for chart in self._charts(self.leaf_grid(level)))

            def spacing(level: int) -> float:
                grid = self.leaf_grid(level)
                return max(grid.spacing[k] for k in leaf_axes(self.config.leaf_axis))

            summary['refinement'] = self.study(measure, spacing).as_dict()

        mismatches = []
        expected = self.config.expect.isothermal
        if expected is not None and expected != passed:
            mismatches.append(f"isothermal: expected {expected}, got {passed}")
        fields = []
        middle = grid.shape[self.config.leaf_axis] // 2
        solution = source.solutions[middle]
        if solution is not None:
            leaf = source.leaf
            extent = (leaf.lower[0], leaf.upper[0], leaf.lower[1], leaf.upper[1])
            a, b = leaf_axes(self.config.leaf_axis)
            fields.append(PlotField('beltrami_residual', 'scalar', extent, solution.pointwise_residual(),
                                    (COORDINATES[a], COORDINATES[b])))
        return Report('isothermal', summary, fields=fields, rows=source.rows(), mismatches=mismatches)

    def holomorphy(self) -> Report:
        tol = self.config.tolerances
        target = self.config.target_grid.build() if self.config.target_grid is not None else None

        def check(grid: Grid, target_grid: Grid | None) -> HolomorphyReport:
            return leafwise_holomorphy(
                self.phi, self.g, self.h, grid,
                mode=self.config.mode,
                target_grid=target_grid,
                leaf_axis=self.config.leaf_axis,
                anchors=self.config.anchors,
                k_max=tol.k_max,
                rtol=tol.solver_rtol,
            )

        report = check(self.grid(), target)
        for line in report.log:
            self.note(f"holomorphy: {line}")
        summary = report.summary()
        passed = report.residual <= tol.cr_tol
        summary['cr_pass'] = passed
        if self.config.refine:
            def measure(level: int) -> float:
                return float(check(self.leaf_grid(level), None).residual)

            def spacing(level: int) -> float:
                grid = self.leaf_grid(level)
                return max(grid.spacing[k] for k in leaf_axes(self.config.leaf_axis))

            summary['refinement'] = self.study(measure, spacing).as_dict()

        mismatches = []
        expected = self.config.expect.holomorphy
        if expected is not None:
            orientation = report.orientation
            if orientation != expected:
                mismatches.append(f"holomorphy: expected {expected}, got {orientation}")
            elif not passed:
                mismatches.append(f"holomorphy: CR residual {report.residual:.3e} above {tol.cr_tol}")
        return Report('holomorphy', summary, mismatches=mismatches)

    def _missing(self, expected: dict[str, bool]) -> list[str]:
        return [f"integrable {label}: no valid nodes" for label in expected]

    def run(self, stage: str) -> Report:
        runners: dict[str, Callable[[], Report]] = {
            'analyze': self.analyze,
            'certify': self.certify,
            'integrability': self.integrability,
            'isothermal': self.isothermal,
            'holomorphy': self.holomorphy,
        }
        self.note(f"stage {stage}")
        # Замаскированные узлы несут NaN
        with np.errstate(invalid='ignore', divide='ignore'):
            report = runners[stage]()
        report.summary = {
            'schema_version': SCHEMA_VERSION,
            'stage': stage,
            'config': self.config.describe(),
            'result': report.summary,
            'mismatches': list(report.mismatches),
            'log': list(self.run_log),
        }
        return report


def run_analyze(config: RunConfig) -> Report:
    return Pipeline(config).run('analyze')


def run_certify(config: RunConfig) -> Report:
    return Pipeline(config).run('certify')


def run_integrability(config: RunConfig) -> Report:
    return Pipeline(config).run('integrability')


def run_isothermal(config: RunConfig) -> Report:
    return Pipeline(config).run('isothermal')


def run_holomorphy(config: RunConfig) -> Report:
    return Pipeline(config).run('holomorphy')


def run_pipeline(config: RunConfig) -> list[Report]:
    """Стадии из [run] stages по порядку, с общим кешем кореперов."""
    pipeline = Pipeline(config)
    return [pipeline.run(stage) for stage in config.stages]
