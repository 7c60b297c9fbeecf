"""
Модуль для сохранения результатов исследований.

Отвечает за запись строк отчёта в CSV, JSON и сводные таблицы XLSX.
"""
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import pandas as pd

from src.setup import logger

CSV_COLUMNS = ['method', 'H', 'level_or_Nb', 'Lambda', 'e_L2', 'e_H1', 'dim', 'seconds']


@dataclass
class StudyRow:
    """
    Одна точка исследования.

    Attributes:
        method (str): Метка метода, например 'wemsfem-haar' или 'msfem-half'
        H (float | None): Размер грубой ячейки (None для строки fine)
        level_or_Nb (int | None): ℓ для WEMsFEM, N_b для ESMsFEM
        Lambda (float | None): min_i λ_{N_b+1}^{(i)} для ESMsFEM
        e_L2 (float | None): Относительная κ-взвешенная L2-погрешность
        e_H1 (float | None): Относительная энергетическая погрешность
        dim (int | None): Размерность пространства
        seconds (float | None): Время расчёта строки
        error (str | None): Текст ошибки, если строка не посчитана
        pruned (int): Число удалённых линейно зависимых функций
        fallbacks (list): Ячейки с заменой базиса при передискретизации
        shift (float): Сдвиг Тихонова грубой системы
    """
    method: str
    H: float = None
    level_or_Nb: int = None
    Lambda: float = None
    e_L2: float = None
    e_H1: float = None
    dim: int = None
    seconds: float = None
    error: str = None
    pruned: int = 0
    fallbacks: list = field(default_factory=list)
    shift: float = 0.0

    @property
    def failed(self):
        return self.error is not None


@dataclass
class StudyReport:
    """
    Результаты исследования.

    Attributes:
        rows (list): Строки StudyRow в детерминированном порядке
        metadata (dict): Хэш конфигурации, версия и параметры поля
    """
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def failed(self):
        return any(row.failed for row in self.rows)


def _format(value):
    """Детерминированное текстовое представление ячейки CSV."""
    if value is None:
        return ''
    if isinstance(value, float):
        return format(value, '.10g')
    return str(value)


def report_frame(report):
    """
    Таблица отчёта со столбцами CSV в виде строк.

    Args:
        report (StudyReport): Отчёт

    Returns:
        pd.DataFrame: Отформатированная таблица
    """
    records = [{column: _format(getattr(row, column)) for column in CSV_COLUMNS} for row in report.rows]
    return pd.DataFrame(records, columns=CSV_COLUMNS, dtype=str)


def emit_csv(report, path):
    """
    Записывает отчёт в CSV: столбцы method,H,level_or_Nb,Lambda,e_L2,e_H1,dim,seconds.

    Args:
        report (StudyReport): Отчёт
        path (str | Path): Путь к файлу

    Returns:
        Path: Путь к записанному файлу
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    report_frame(report).to_csv(path, index=False, lineterminator='\n')
    logger.info(f"CSV-отчёт записан: {path} ({len(report.rows)} строк)")
    return path


def emit_json(report, path):
    """
    Записывает отчёт в JSON со служебными полями строк и метаданными.

    Args:
        report (StudyReport): Отчёт
        path (str | Path): Путь к файлу

    Returns:
        Path: Путь к записанному файлу
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump({
            'metadata': report.metadata,
            'rows': [asdict(row) for row in report.rows],
        }, f, ensure_ascii=False, indent=2)
    logger.info(f"JSON-отчёт записан: {path}")
    return path


def pivot_table(report):
    """
    Сводные таблицы по методам: строки H, столбцы ℓ или N_b, значения e_L2 и e_H1.

    Args:
        report (StudyReport): Отчёт

    Returns:
        dict: Имя метода -> pd.DataFrame
    """
    rows = [row for row in report.rows if not row.failed and row.H is not None]
    if not rows:
        return {}
    frame = pd.DataFrame([{
        'method': row.method,
        'H': row.H,
        'column': '-' if row.level_or_Nb is None else row.level_or_Nb,
        'e_L2': row.e_L2,
        'e_H1': row.e_H1,
    } for row in rows])
    tables = {}
    for method, group in frame.groupby('method', sort=False):
        table = group.pivot_table(index='H', columns='column', values=['e_L2', 'e_H1'], aggfunc='first')
        tables[method] = table.sort_index(ascending=False)
    return tables


def emit_xlsx(report, path):
    """
    Записывает сводные таблицы в книгу XLSX, по листу на метод.

    Args:
        report (StudyReport): Отчёт
        path (str | Path): Путь к файлу

    Returns:
        Path | None: Путь к файлу или None, если успешных строк нет
    """
    tables = pivot_table(report)
    if not tables:
        logger.warning("Нет успешных строк для сводной таблицы, XLSX не создан")
        return None
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with pd.ExcelWriter(path, engine='openpyxl') as writer:
        for method, table in tables.items():
            table.to_excel(writer, sheet_name=method[:31])
    logger.info(f"Сводные таблицы записаны: {path}")
    return path
