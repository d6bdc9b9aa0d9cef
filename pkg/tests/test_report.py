"""Тесты записи отчётов и рисунков."""

import json
from pathlib import Path

import numpy as np
import yaml
from run.config import load_config
from run.plots import emit_plots
from run.report import CSV_HEADER, plain, write_report
from run.stages import run_analyze, run_isothermal

CONFIGS = Path(__file__).resolve().parent.parent / 'configs'


def test_plain_converts_numpy() -> None:
    """Тест приведения значений numpy к встроенным типам."""
    value = plain({
        'a': np.float64(1.5),
        'b': np.int64(3),
        'c': np.bool_(True),
        'd': np.array([1.0, np.nan]),
        'e': (np.str_('x'), float('inf')),
    })

    assert value == {'a': 1.5, 'b': 3, 'c': True, 'd': [1.0, None], 'e': ['x', None]}
    assert type(value['b']) is int


def test_write_summary_and_records(tmp_path: Path) -> None:
    """Тест файлов стадии анализа в формате records."""
    report = run_analyze(load_config(CONFIGS / 'flat.cfg'))
    written = write_report(report, tmp_path, 'records')

    assert [p.name for p in written] == ['analyze.summary.yml', 'analyze.records.jsonl']
    summary = yaml.safe_load(written[0].read_text(encoding='utf-8'))
    assert summary['stage'] == 'analyze'
    assert summary['result']['nodes'] == 125
    lines = written[1].read_text(encoding='utf-8').splitlines()
    assert len(lines) == 125
    assert json.loads(lines[0])['reason'] == 'ok'


def test_summary_format_skips_records(tmp_path: Path) -> None:
    """Тест: в формате summary пишется только сводка."""
    report = run_analyze(load_config(CONFIGS / 'identity.cfg'))

    assert [p.name for p in write_report(report, tmp_path / 'nested')] == ['analyze.summary.yml']


def test_chart_table(tmp_path: Path) -> None:
    """Тест таблицы карты стадии isothermal."""
    report = run_isothermal(load_config(CONFIGS / 'conjugate.cfg'))
    written = write_report(report, tmp_path)

    assert written[-1].name == 'isothermal.chart.csv'
    lines = written[-1].read_text(encoding='utf-8').splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == 1 + 9 * 9 * 3


def test_emit_plots(tmp_path: Path) -> None:
    """Тест рисунков: пустые поля пропускаются."""
    flat = emit_plots(run_analyze(load_config(CONFIGS / 'flat.cfg')), tmp_path)
    identity = emit_plots(run_analyze(load_config(CONFIGS / 'identity.cfg')), tmp_path / 'identity')

    assert sorted(p.name for p in flat) == ['analyze.gap.svg', 'analyze.omega_minus.svg', 'analyze.omega_plus.svg']
    assert all(p.stat().st_size > 0 for p in flat)
    assert identity == []
