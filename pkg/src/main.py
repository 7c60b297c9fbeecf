"""
Основной модуль исследования сходимости.

Координирует построение сеток, поля, эталонного решения и всех строк отчёта.
"""
import math
import time
from pathlib import Path

from msfem import __version__
from msfem.fem_core import nodal_values
from msfem.mesh import build_grids
from msfem.metrics import error_report
from msfem.ms_spaces import (
    OfflineContext,
    build_esmsfem_space,
    build_msfem_space,
    build_wemsfem_space,
    coarse_solve,
)
from msfem.wavelets import WaveletSpec
from src.processor import source_function
from src.report import StudyReport, StudyRow, emit_csv, emit_json, emit_xlsx
from src.setup import get_results_dir, logger
from src.study_config import build_field, fine_grid, reference_solution


def study_points(config):
    """
    Точки исследования в порядке строк отчёта.

    Returns:
        list: Кортежи (метод, вариант, число грубых ячеек, ℓ или N_b)
    """
    points = []
    for method in config.methods:
        if method == 'wemsfem':
            points.extend(('wemsfem', kind, nx, level)
                          for kind in config.wavelets for nx in config.coarse for level in config.levels)
        elif method == 'esmsfem':
            points.extend(('esmsfem', None, nx, nb) for nx in config.coarse for nb in config.nb)
        elif method == 'msfem':
            points.extend(('msfem', mode, nx, None) for mode in config.oversampling for nx in config.coarse)
        else:
            points.append(('fine', None, None, None))
    return points


def _row_label(method, variant):
    return method if variant is None else f"{method}-{variant}"


def _build_space(method, variant, value, context):
    if method == 'wemsfem':
        return build_wemsfem_space(context.grids, context.field, WaveletSpec(variant, value), context=context)
    if method == 'esmsfem':
        return build_esmsfem_space(context.grids, context.field, value, context=context)
    return build_msfem_space(context.grids, context.field, variant, context=context)


def output_dir(config):
    return Path(config.out) if config.out else get_results_dir() / config.name


def run_study(config, write=True):
    """
    Выполняет исследование: u_h один раз на поле, затем все строки методов.

    Ошибка в строке записывается в её поле error, остальные строки
    продолжают считаться.

    Args:
        config (StudyConfig): Проверенная конфигурация
        write (bool): Записывать ли CSV, JSON и XLSX в каталог результатов

    Returns:
        StudyReport: Отчёт
    """
    logger.info(f"Начало исследования '{config.name}'...")
    fine = fine_grid(config)
    field = build_field(config, fine)
    report = StudyReport(metadata={
        'name': config.name,
        'config_hash': config.config_hash(),
        'version': __version__,
        'field': config.field or Path(config.raster).name,
        'field_fingerprint': field.fingerprint(),
        'contrast': field.contrast,
        'fine': config.fine,
        'source': config.source,
    })
    contexts = {}
    reference = None
    reference_error = None
    try:
        reference = reference_solution(field, fine, config.source, config.tol)
    except Exception as e:
        reference_error = f"{type(e).__name__}: {e}"
        logger.error(f"Не удалось получить эталонное решение: {e}")

    points = study_points(config)
    for number, (method, variant, nx, value) in enumerate(points, start=1):
        row = StudyRow(method=_row_label(method, variant), H=None if nx is None else 1.0 / nx, level_or_Nb=value)
        started = time.perf_counter()
        try:
            if reference_error:
                raise RuntimeError(reference_error)
            if method == 'fine':
                row.e_L2, row.e_H1 = 0.0, 0.0
                row.dim = int(fine.n_nodes - fine.boundary_nodes.size)
            else:
                if nx not in contexts:
                    grids = build_grids(nx, config.refinement(nx))
                    contexts[nx] = OfflineContext(grids, field, config.workers)
                context = contexts[nx]
                space = _build_space(method, variant, value, context)
                f = nodal_values(context.grids.fine, source_function(config.source))
                solution = coarse_solve(space, field, f)
                errors = error_report(solution.u_ms, reference, field, space.dimension)
                row.e_L2, row.e_H1, row.dim = errors.e_L2, errors.e_H1, space.dimension
                if space.Lambda is not None and not math.isnan(space.Lambda):
                    row.Lambda = space.Lambda
                row.pruned, row.fallbacks, row.shift = space.pruned, list(space.fallbacks), solution.shift
            logger.info(f"Строка {number}/{len(points)} {row.method} H={row.H} "
                        f"параметр={value}: e_L2={row.e_L2:.4e}, e_H1={row.e_H1:.4e}, dim={row.dim}")
        except Exception as e:
            row.error = f"{type(e).__name__}: {e}"
            logger.error(f"Ошибка в строке {number}/{len(points)} {row.method} H={row.H}: {e}")
        if config.timings:
            row.seconds = time.perf_counter() - started
        report.rows.append(row)

    if write:
        directory = output_dir(config)
        emit_csv(report, directory / 'report.csv')
        emit_json(report, directory / 'report.json')
        emit_xlsx(report, directory / 'report.xlsx')
    logger.info(f"Исследование '{config.name}' завершено: {len(report.rows)} строк, "
                f"ошибок {sum(row.failed for row in report.rows)}")
    return report
