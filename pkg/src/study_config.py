"""
Модуль для управления конфигурацией исследований.

Отвечает за загрузку файлов исследований, их проверку до начала расчётов,
хэширование и кэширование мелкомасштабного решения u_h.
"""
import dataclasses
import hashlib
import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

from dotenv import dotenv_values

from msfem import CoefficientError
from msfem.coefficient import (
    PRESETS,
    SYNTHETIC_KINDS,
    constant_field,
    load_raster,
    preset_field,
    synthetic_field,
)
from msfem.fem_core import fine_reference
from msfem.mesh import FineGrid
from msfem.wavelets import KINDS as WAVELET_KINDS
from src.processor import (
    ValueParseError,
    parse_bool,
    parse_fraction,
    parse_int_list,
    parse_list,
    parse_source,
    source_function,
)
from src.setup import CG_MAXITER, DIRECT_LIMIT, SOLVER_TOL, logger

METHODS = ('wemsfem', 'esmsfem', 'msfem', 'fine')
OVERSAMPLING_MODES = ('none', 'half', 'full')
KNOWN_KEYS = (
    'name', 'field', 'raster', 'contrast', 'seed', 'source', 'fine', 'H', 'methods',
    'levels', 'wavelets', 'nb', 'oversampling', 'tol', 'out', 'timings',
)

# Кэш мелкомасштабных решений: (отпечаток поля, разрешение, правая часть, допуск) -> u_h
_reference_cache = {}


class StudyConfigError(Exception):
    """Некорректный файл исследования."""


@dataclass(frozen=True)
class StudyConfig:
    """
    Параметры одного исследования сходимости.

    Attributes:
        name (str): Имя исследования
        field (str | None): Пресет, вид синтетического поля или "constant[:c]"
        raster (str | None): Путь к растру проницаемости
        contrast (float | None): Контраст синтетического поля или замена контраста пресета
        seed (int): Зерно генератора синтетического поля
        source (str): Нормализованная правая часть
        fine (int): Число мелких ячеек по оси
        coarse (tuple): Числа грубых ячеек 1/H
        methods (tuple): Методы в порядке строк отчёта
        levels (tuple): Уровни ℓ для WEMsFEM
        wavelets (tuple): Виды вейвлетов
        nb (tuple): Значения N_b для ESMsFEM
        oversampling (tuple): Режимы передискретизации MsFEM
        tol (float): Допуск решателей
        timings (bool): Заполнять ли столбец seconds
        out (str | None): Каталог результатов
        workers (int): Число потоков
    """
    name: str = 'study'
    field: str = None
    raster: str = None
    contrast: float = None
    seed: int = 0
    source: str = 'const:1.0'
    fine: int = 64
    coarse: tuple = (8,)
    methods: tuple = ('wemsfem',)
    levels: tuple = (0,)
    wavelets: tuple = ('haar',)
    nb: tuple = (2,)
    oversampling: tuple = ('none',)
    tol: float = SOLVER_TOL
    timings: bool = False
    out: str = None
    workers: int = dataclasses.field(default=1, compare=False)

    @property
    def H_values(self):
        return tuple(1.0 / nx for nx in self.coarse)

    def refinement(self, nx_coarse):
        return self.fine // nx_coarse

    def semantic(self):
        """Поля, влияющие на результаты (без каталога вывода и числа потоков)."""
        data = asdict(self)
        data.pop('out')
        data.pop('workers')
        return data

    def config_hash(self):
        """SHA-256 канонического JSON семантических полей."""
        canonical = json.dumps(self.semantic(), sort_keys=True, separators=(',', ':'), ensure_ascii=False)
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def _is_power_of_two(value):
    return value >= 1 and value & (value - 1) == 0


def _choices(values, allowed, key):
    unknown = [v for v in values if v not in allowed]
    if unknown:
        raise StudyConfigError(f"Ключ {key}: неизвестные значения {', '.join(unknown)}; "
                               f"допустимы {', '.join(allowed)}")
    return tuple(values)


def validate(config):
    """
    Проверяет согласованность конфигурации до начала расчётов.

    Args:
        config (StudyConfig): Конфигурация

    Returns:
        StudyConfig: Та же конфигурация
    """
    if bool(config.field) == bool(config.raster):
        raise StudyConfigError("Нужно указать ровно один из ключей field и raster")
    if config.field:
        kind = config.field.split(':', 1)[0]
        if kind not in PRESETS and kind not in SYNTHETIC_KINDS and kind != 'constant':
            raise StudyConfigError(f"Неизвестное поле '{config.field}'")
    if config.fine < 4:
        raise StudyConfigError(f"Мелкая сетка слишком мала: fine={config.fine}")
    if config.raster:
        try:
            load_raster(config.raster, fine_grid(config))
        except CoefficientError as e:
            raise StudyConfigError(f"Растр не прошёл проверку: {e}") from e
    if not config.coarse:
        raise StudyConfigError("Не задано ни одного значения H")
    if not config.methods:
        raise StudyConfigError("Не задано ни одного метода")
    for nx in config.coarse:
        if config.fine % nx:
            raise StudyConfigError(f"H = 1/{nx} не даёт целого коэффициента измельчения для fine={config.fine}")
        n = config.fine // nx
        if nx < 2 or n < 2 or not _is_power_of_two(n):
            raise StudyConfigError(
                f"H = 1/{nx}: коэффициент измельчения {n} должен быть степенью двойки не меньше 2")
        if 'wemsfem' in config.methods:
            too_deep = [lvl for lvl in config.levels if 2 ** lvl > n]
            if too_deep:
                raise StudyConfigError(f"H = 1/{nx}: уровни {too_deep} мельче сетки (n={n})")
    if 'wemsfem' in config.methods and (not config.levels or min(config.levels) < 0):
        raise StudyConfigError("Для wemsfem нужны неотрицательные уровни levels")
    if 'esmsfem' in config.methods and (not config.nb or min(config.nb) < 1):
        raise StudyConfigError("Для esmsfem нужны значения nb не меньше 1")
    if config.contrast is not None and not config.contrast >= 1.0:
        raise StudyConfigError(f"Контраст должен быть не меньше 1, получено {config.contrast}")
    if not config.tol > 0.0:
        raise StudyConfigError(f"Допуск должен быть положительным, получено {config.tol}")
    if config.workers < 1:
        raise StudyConfigError(f"Число потоков должно быть положительным, получено {config.workers}")
    return config


def parse_study(values, base_dir=None):
    """
    Строит конфигурацию из словаря строковых значений.

    Args:
        values (dict): Пары ключ-значение файла исследования
        base_dir (Path, optional): Каталог для относительного пути к растру

    Returns:
        StudyConfig: Проверенная конфигурация
    """
    unknown = sorted(set(values) - set(KNOWN_KEYS))
    if unknown:
        raise StudyConfigError(f"Неизвестные ключи: {', '.join(unknown)}")
    try:
        kwargs = {}
        if values.get('name'):
            kwargs['name'] = values['name'].strip()
        if values.get('field'):
            kwargs['field'] = values['field'].strip()
        if values.get('raster'):
            raster = Path(values['raster'].strip())
            if base_dir is not None and not raster.is_absolute():
                raster = Path(base_dir) / raster
            kwargs['raster'] = str(raster)
        if values.get('contrast'):
            kwargs['contrast'] = float(values['contrast'])
        if values.get('seed'):
            kwargs['seed'] = int(values['seed'])
        if values.get('source'):
            kwargs['source'] = parse_source(values['source'])
        if values.get('fine'):
            kwargs['fine'] = int(values['fine'])
        if values.get('H'):
            kwargs['coarse'] = tuple(parse_fraction(item) for item in parse_list(values['H']))
        if values.get('methods'):
            kwargs['methods'] = _choices(parse_list(values['methods']), METHODS, 'methods')
        if values.get('levels'):
            kwargs['levels'] = tuple(parse_int_list(values['levels'], 'levels'))
        if values.get('wavelets'):
            kwargs['wavelets'] = _choices(parse_list(values['wavelets']), WAVELET_KINDS, 'wavelets')
        if values.get('nb'):
            kwargs['nb'] = tuple(parse_int_list(values['nb'], 'nb'))
        if values.get('oversampling'):
            kwargs['oversampling'] = _choices(parse_list(values['oversampling']), OVERSAMPLING_MODES,
                                              'oversampling')
        if values.get('tol'):
            kwargs['tol'] = float(values['tol'])
        if values.get('timings'):
            kwargs['timings'] = parse_bool(values['timings'])
        if values.get('out'):
            kwargs['out'] = values['out'].strip()
    except (ValueParseError, ValueError) as e:
        raise StudyConfigError(str(e)) from e
    return validate(StudyConfig(**kwargs))


def load_study(path, out=None, workers=None, tol=None):
    """
    Загружает файл исследования и применяет параметры командной строки.

    Args:
        path (str | Path): Путь к файлу "ключ = значение"
        out (str, optional): Каталог результатов вместо ключа out
        workers (int, optional): Число потоков
        tol (float, optional): Допуск решателей вместо ключа tol

    Returns:
        StudyConfig: Проверенная конфигурация
    """
    path = Path(path)
    if not path.is_file():
        raise StudyConfigError(f"Файл исследования не найден: {path}")
    values = dotenv_values(path)
    config = parse_study(values, base_dir=path.parent)
    overrides = {}
    if out is not None:
        overrides['out'] = str(out)
    if workers is not None:
        overrides['workers'] = int(workers)
    if tol is not None:
        overrides['tol'] = float(tol)
    if overrides:
        config = validate(replace(config, **overrides))
    logger.info(f"Загружено исследование '{config.name}' из {path}, хэш {config.config_hash()[:12]}")
    return config


def build_field(config, fine):
    """
    Поле коэффициента исследования на мелкой сетке.

    Args:
        config (StudyConfig): Конфигурация
        fine (FineGrid): Мелкая сетка

    Returns:
        CoefficientField: Поле κ
    """
    if config.raster:
        return load_raster(config.raster, fine)
    kind, _, argument = config.field.partition(':')
    if kind == 'constant':
        return constant_field(fine, float(argument) if argument else 1.0)
    if kind in PRESETS:
        return preset_field(kind, fine, config.contrast)
    return synthetic_field(fine, kind, 1.0e4 if config.contrast is None else config.contrast, config.seed)


def fine_grid(config):
    return FineGrid(config.fine, config.fine, 1.0 / config.fine, 0, 0, config.fine)


def reference_solution(field_, fine, source, tol):
    """
    Мелкомасштабное решение u_h с кэшированием.

    Args:
        field_ (CoefficientField): Поле κ
        fine (FineGrid): Мелкая сетка
        source (str): Нормализованная правая часть
        tol (float): Допуск решателя

    Returns:
        FineFunction: u_h
    """
    key = (field_.fingerprint(), fine.nx, source, tol)
    if key in _reference_cache:
        logger.debug(f"u_h взято из кэша для сетки {fine.nx}x{fine.nx}")
        return _reference_cache[key]
    solution = fine_reference(fine, field_, source_function(source), tol=tol,
                              direct_limit=DIRECT_LIMIT, maxiter=CG_MAXITER)
    _reference_cache[key] = solution
    return solution


def clear_reference_cache():
    """Очищает кэш мелкомасштабных решений."""
    _reference_cache.clear()
