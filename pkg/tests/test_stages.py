"""Тесты стадий конвейера на поставляемых конфигурациях."""

from pathlib import Path

import numpy as np
import pytest
from run.config import load_config
from run.stages import (
    RUN_LOG_MAX_LEN,
    RUN_LOG_TRIM_TO,
    SCHEMA_VERSION,
    Pipeline,
    run_analyze,
    run_certify,
    run_holomorphy,
    run_integrability,
    run_isothermal,
    run_pipeline,
)

CONFIGS = Path(__file__).resolve().parent.parent / 'configs'


def config(name: str):
    return load_config(CONFIGS / f'{name}.cfg')


def test_analyze_flat() -> None:
    """Тест стадии анализа: простой спектр во всех узлах."""
    report = run_analyze(config('flat'))
    result = report.summary['result']

    assert report.ok
    assert report.summary['schema_version'] == SCHEMA_VERSION
    assert result['nodes'] == 125
    assert result['masked'] == 0
    assert len(report.records) == 125
    assert 'eigenvalues' in report.records[0]
    assert [f.name for f in report.fields] == ['gap', 'omega_plus', 'omega_minus']


def test_analyze_identity_masked() -> None:
    """Тест: у изометрии маскируются все узлы, ожидание выполнено."""
    report = run_analyze(config('identity'))

    assert report.ok
    assert report.summary['result']['masked'] == 125
    assert 'gap_min' not in report.summary['result']
    assert report.records[0] == {'node': [0, 0, 0], 'x': [0.0, 0.0, 0.0], 'reason': 'repeated'}


def test_certify_identity_masked() -> None:
    """Тест: без спектральных данных сертификат замаскирован."""
    report = run_certify(config('identity'))

    assert report.summary['result']['plus']['verdict'] == 'masked'
    assert all(record['verdict'] == 'masked' for record in report.records)


def test_integrability_skipped_without_nodes() -> None:
    """Тест: без немаскированных узлов стадия пропускается."""
    report = run_integrability(config('identity'))

    assert report.summary['result'] == {'skipped': 'no valid nodes'}
    assert report.ok


def test_certify_diagonal() -> None:
    """Тест: пара ω± конформна, dx3 нет."""
    report = run_certify(config('diagonal'))
    result = report.summary['result']

    assert report.ok
    assert result['plus']['verdict'] == 'conformal'
    assert result['omega']['verdict'] == 'not_conformal'


def test_pipeline_example() -> None:
    """Тест полного конвейера примера с общим кешем кореперов."""
    reports = run_pipeline(config('example1'))

    assert [r.stage for r in reports] == ['analyze', 'certify', 'integrability']
    assert all(r.ok for r in reports)
    integrability = reports[2].summary['result']
    assert integrability['distributions']['plus']['frobenius']['integrable'] is True


def test_integrability_refinement() -> None:
    """Тест исследования сходимости при refine = 1."""
    report = run_integrability(config('flat'))
    studies = report.summary['result']['refinement']

    assert set(studies) == {'plus', 'minus'}
    assert len(studies['plus']['spacings']) == 2
    assert report.ok


def test_isothermal_conjugate() -> None:
    """Тест изотермических карт: обе метрики евклидовы."""
    report = run_isothermal(config('conjugate'))

    assert report.ok
    assert report.summary['result']['isothermal'] is True
    assert report.rows is not None
    assert report.rows.shape == (9 * 9 * 3, 6)


@pytest.mark.parametrize(("name", "orientation"), [('square', 'holomorphic'), ('conjugate', 'antiholomorphic')])
def test_holomorphy(name: str, orientation: str) -> None:
    """Тест ориентации отображения на листах."""
    report = run_holomorphy(config(name))

    assert report.ok
    assert report.summary['result']['orientation'] == orientation
    assert report.summary['result']['cr_pass'] is True


def test_mismatch_reported() -> None:
    """Тест: несовпадение с ожиданием попадает в отчёт."""
    base = config('identity')
    changed = base.with_overrides(expect=type(base.expect)(masked='none'))
    report = run_analyze(changed)

    assert not report.ok
    assert report.mismatches == ["masked nodes: expected none, got all"]


def test_run_log_is_bounded() -> None:
    """Тест ограничения журнала запуска."""
    pipeline = Pipeline(config('identity'))
    for i in range(RUN_LOG_MAX_LEN + 1):
        pipeline.note(f"line {i}")

    assert len(pipeline.run_log) == RUN_LOG_TRIM_TO
    assert pipeline.run_log[-1] == f"line {RUN_LOG_MAX_LEN}"


def test_leaf_grid_refines_leaf_axes() -> None:
    """Тест: измельчение для карт не трогает ось листа."""
    pipeline = Pipeline(config('square'))

    assert pipeline.leaf_grid(0).shape == (17, 17, 3)
    assert pipeline.leaf_grid(1).shape == (33, 33, 3)


def test_frame_cached() -> None:
    """Тест кеша полей кореперов по уровням."""
    pipeline = Pipeline(config('flat'))

    assert pipeline.frame() is pipeline.frame(0)
    assert pipeline.frame(1).grid.shape == (9, 9, 9)
    assert np.isfinite(pipeline.frame(1).values).all()
