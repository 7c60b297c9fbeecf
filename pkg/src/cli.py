"""
Интерфейс командной строки для исследований сходимости.

Предоставляет команды мелкомасштабного решения, запуска исследования и
просмотра поля коэффициента.
"""
import argparse
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from msfem import MsfemError
from msfem.coefficient import PRESETS, preset_field, preset_names, save_raster
from msfem.fem_core import assemble_mass, assemble_stiffness
from msfem.mesh import FineGrid
from src.main import output_dir, run_study
from src.setup import WORKERS, get_results_dir, logger
from src.study_config import StudyConfigError, build_field, fine_grid, load_study, reference_solution

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2


def _load(args):
    return load_study(args.config, out=args.out, workers=args.workers, tol=args.tol)


def handle_fine_solve(args):
    """
    Вычисляет u_h для поля исследования и записывает fine_solution.csv.

    Args:
        args: Аргументы командной строки
    """
    config = _load(args)
    fine = fine_grid(config)
    field = build_field(config, fine)
    solution = reference_solution(field, fine, config.source, config.tol)
    u = solution.values
    energy = float(np.sqrt(u @ (assemble_stiffness(fine, field) @ u)))
    l2 = float(np.sqrt(u @ (assemble_mass(fine, field) @ u)))
    logger.info(f"Норма u_h: энергетическая {energy:.6e}, κ-взвешенная L2 {l2:.6e}")
    path = output_dir(config) / 'fine_solution.csv'
    path.parent.mkdir(parents=True, exist_ok=True)
    xy = fine.coordinates
    pd.DataFrame({'x': xy[:, 0], 'y': xy[:, 1], 'u': u}).to_csv(
        path, index=False, float_format='%.10g', lineterminator='\n')
    logger.info(f"Мелкомасштабное решение записано: {path}")
    return EXIT_OK


def handle_study(args):
    """
    Запускает исследование по файлу конфигурации.

    Args:
        args: Аргументы командной строки
    """
    report = run_study(_load(args))
    if report.failed:
        logger.error("Исследование завершено с ошибками в строках.")
        return EXIT_SOLVER
    logger.info("Исследование завершено успешно.")
    return EXIT_OK


def handle_field_preview(args):
    """
    Сохраняет растр κ из пресета или файла исследования.

    Args:
        args: Аргументы командной строки
    """
    if args.list:
        for name in preset_names():
            kind, contrast, seed = PRESETS[name]
            print(f"- {name} ({kind}, контраст {contrast:g}, зерно {seed})")
        return EXIT_OK
    if args.preset:
        fine = FineGrid(args.fine, args.fine, 1.0 / args.fine, 0, 0, args.fine)
        field = preset_field(args.preset, fine, args.contrast)
        directory = Path(args.out) if args.out else get_results_dir() / 'fields'
        name = args.preset
    elif args.config:
        config = _load(args)
        field = build_field(config, fine_grid(config))
        directory = output_dir(config)
        name = config.name
    else:
        logger.error("Укажите --preset, --config или --list")
        return EXIT_CONFIG
    path = directory / f"{name}_kappa.txt"
    save_raster(field, path)
    logger.info(f"Поле {name}: min {field.alpha:g}, max {field.beta:g}, контраст {field.contrast:g}")
    return EXIT_OK


def setup_cli():
    parser = argparse.ArgumentParser(description='Исследования сходимости краевых многомасштабных методов')
    subparsers = parser.add_subparsers(dest='command', help='Доступные команды')

    def common(sub, config_required=True):
        sub.add_argument('--config', required=config_required, help='Файл исследования "ключ = значение"')
        sub.add_argument('--out', help='Каталог результатов')
        sub.add_argument('--workers', type=int, default=WORKERS, help=f'Число потоков (по умолчанию {WORKERS})')
        sub.add_argument('--tol', type=float, help='Допуск решателей')

    # Команда fine-solve
    common(subparsers.add_parser('fine-solve', help='Решить мелкомасштабную задачу и сохранить u_h'))

    # Команда study
    common(subparsers.add_parser('study', help='Запустить исследование сходимости'))

    # Команда field-preview
    parser_preview = subparsers.add_parser('field-preview', help='Сохранить растр поля κ')
    common(parser_preview, config_required=False)
    parser_preview.add_argument('--preset', choices=preset_names(), help='Имя пресета поля')
    parser_preview.add_argument('--fine', type=int, default=256, help='Мелких ячеек по оси (по умолчанию 256)')
    parser_preview.add_argument('--contrast', type=float, help='Замена контраста пресета')
    parser_preview.add_argument('--list', action='store_true', help='Вывести список пресетов')

    return parser


HANDLERS = {
    'fine-solve': handle_fine_solve,
    'study': handle_study,
    'field-preview': handle_field_preview,
}


def process_cli_args(args):
    """
    Обрабатывает аргументы командной строки.

    Returns:
        int: Код завершения: 0 успех, 1 ошибка конфигурации, 2 ошибка решателя
    """
    handler = HANDLERS.get(args.command)
    if handler is None:
        print("Не указана команда. Используйте --help для просмотра доступных команд.")
        return EXIT_CONFIG
    try:
        return handler(args)
    except StudyConfigError as e:
        logger.error(f"Ошибка конфигурации: {e}")
        return EXIT_CONFIG
    except MsfemError as e:
        logger.error(f"Ошибка расчёта: {e}")
        return EXIT_SOLVER


def run_cli(argv=None):
    """Запускает интерфейс командной строки."""
    parser = setup_cli()
    args = parser.parse_args(argv)
    return process_cli_args(args)


if __name__ == "__main__":
    sys.exit(run_cli())
