"""
Result export - CSV curves and manifests
Запись кривых в CSV и манифеста эксперимента
"""

import csv
import logging
from pathlib import Path

import yaml

from modules.errors import OutputError

logger = logging.getLogger(__name__)

CURVE_HEADER = [
    "mer_db",
    "scheme",
    "p_analytic",
    "p_mc",
    "ci_low",
    "ci_high",
    "p_lower_bound",
    "p_upper_bound",
]

DEFAULT_DIGITS = 12


def format_value(value, digits=DEFAULT_DIGITS):
    """Число с digits значащими цифрами; None -> пустое поле"""
    if value is None:
        return ""
    return f"{float(value):.{digits}g}"


def curve_record(row, digits=DEFAULT_DIGITS, with_m_tx=False):
    """Строка CSV для SweepRow"""
    mc = row.p_mc
    record = [
        format_value(row.mer_db, digits),
        row.scheme.value,
        format_value(row.p_analytic, digits),
        format_value(mc.p_hat if mc else None, digits),
        format_value(mc.ci_low if mc else None, digits),
        format_value(mc.ci_high if mc else None, digits),
        format_value(row.p_lower_bound, digits),
        format_value(row.p_upper_bound, digits),
    ]
    if with_m_tx:
        record.insert(0, str(row.m_tx))
    return record


def ensure_dir(out_dir):
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OutputError(f"cannot create output directory {out_dir}: {e}") from e
    return out_dir


def write_curve_csv(path, rows, digits=DEFAULT_DIGITS, with_m_tx=False):
    """
    Запись одной кривой в CSV

    Args:
        path: Путь к файлу
        rows: Последовательность SweepRow
        digits: Значащие цифры
        with_m_tx: Добавить первый столбец m_tx (кривые по числу антенн)

    Returns:
        Path: Путь к записанному файлу
    """
    path = Path(path)
    header = (["m_tx"] if with_m_tx else []) + CURVE_HEADER
    try:
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow(curve_record(row, digits, with_m_tx))
    except OSError as e:
        raise OutputError(f"cannot write {path}: {e}") from e

    logger.info(f"Записано {len(rows)} строк: {path}")
    return path


def write_manifest(path, manifest):
    """Манифест в YAML (ключи отсортированы, без отметок времени)"""
    path = Path(path)
    try:
        with open(path, "w", encoding="utf-8") as f:
            yaml.safe_dump(manifest, f, sort_keys=True, allow_unicode=True, default_flow_style=False)
    except OSError as e:
        raise OutputError(f"cannot write manifest {path}: {e}") from e
    logger.info(f"Манифест записан: {path}")
    return path
