"""Report writers: YAML summaries, JSONL records and CSV chart tables."""

import json
import math
from pathlib import Path

import numpy as np
import yaml

from .stages import Report

FORMAT_RECORDS = 'records'
FORMAT_SUMMARY = 'summary'
CSV_HEADER = 'x,y,t,re_w,im_w,residual'
CSV_FORMAT = '%.12e'


def plain(value: object) -> object:
    """Приводит numpy-значения к встроенным типам; NaN и ±inf становятся None."""
    if isinstance(value, dict):
        return {str(key): plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(item) for item in value]
    if isinstance(value, np.ndarray):
        return plain(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        number = float(value)
        return number if math.isfinite(number) else None
    if isinstance(value, np.str_):
        return str(value)
    return value


def summary_text(report: Report) -> str:
    return yaml.safe_dump(plain(report.summary), sort_keys=True, allow_unicode=True)


def write_report(report: Report, out_dir: str | Path, fmt: str = FORMAT_SUMMARY) -> list[Path]:
    """Записывает файлы стадии и возвращает их пути.

    Сводка пишется всегда; построчные записи только в формате records,
    таблица карты только если стадия её построила.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    path = out / f"{report.stage}.summary.yml"
    path.write_text(summary_text(report), encoding='utf-8')
    written.append(path)

    if fmt == FORMAT_RECORDS and report.records:
        path = out / f"{report.stage}.records.jsonl"
        with path.open('w', encoding='utf-8') as handle:
            for record in report.records:
                handle.write(json.dumps(plain(record), sort_keys=True, allow_nan=False))
                handle.write('\n')
        written.append(path)

    if report.rows is not None and len(report.rows):
        path = out / f"{report.stage}.chart.csv"
        np.savetxt(path, report.rows, fmt=CSV_FORMAT, delimiter=',', header=CSV_HEADER, comments='')
        written.append(path)
    return written
