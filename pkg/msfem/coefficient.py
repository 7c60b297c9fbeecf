"""
Модуль полей проницаемости κ.

Синтетические высококонтрастные поля, чтение растров, сохранённые пресеты
и взвешенный коэффициент κ̃ = H^2 κ Σ_i |∇χ_i|^2.
"""
import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from msfem import CoefficientError
from msfem.fem_core import gradient_operators

logger = logging.getLogger('msfem.coefficient')

# Координаты синтетических включений задаются целыми долями 1/_UNITS стороны области
_UNITS = 512

# Пресеты: имя -> (вид, контраст, зерно)
PRESETS = {
    'model1-analogue': ('mixed', 1.0e4, 2019),
    'model3-analogue': ('inclusions', 1.0e4, 3),
    'channels': ('channels', 1.0e4, 11),
    'inclusions-sweep': ('inclusions', 1.0e4, 7),
}

SYNTHETIC_KINDS = ('channels', 'inclusions', 'mixed')


@dataclass(frozen=True)
class CoefficientField:
    """
    Кусочно-постоянный по мелким ячейкам коэффициент κ.

    Attributes:
        values (np.ndarray): Значения (ny, nx), строка 0 снизу
        alpha (float): min κ
        beta (float): max κ
    """
    values: np.ndarray
    alpha: float = field(init=False)
    beta: float = field(init=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.size == 0:
            raise CoefficientError(f"Ожидается двумерный массив значений, получена форма {values.shape}")
        if not np.all(np.isfinite(values)) or np.any(values <= 0.0):
            raise CoefficientError("Коэффициент должен быть конечным и строго положительным во всех ячейках")
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'alpha', float(values.min()))
        object.__setattr__(self, 'beta', float(values.max()))

    @property
    def contrast(self):
        return self.beta / self.alpha

    @property
    def shape(self):
        return self.values.shape

    def fingerprint(self):
        """SHA-256 значений поля, используется как ключ кэша."""
        return hashlib.sha256(np.ascontiguousarray(self.values).tobytes()).hexdigest()

    def scaled(self, factor):
        return CoefficientField(self.values * factor)


@dataclass(frozen=True)
class WeightedCoefficient:
    """
    Взвешенный коэффициент κ̃ по мелким ячейкам и обратный к нему κ̃^{-1}.

    Attributes:
        values (np.ndarray): κ̃ (ny, nx)
        inverse (np.ndarray): 1/κ̃, равный 1 там, где κ̃ = 0
    """
    values: np.ndarray
    inverse: np.ndarray


def _fine_shape(fine):
    return (fine.ny, fine.nx)


def constant_field(fine, value):
    """
    Постоянное поле.

    Args:
        fine (FineGrid): Мелкая сетка
        value (float): Значение κ > 0

    Returns:
        CoefficientField: Поле с контрастом 1
    """
    if not value > 0:
        raise CoefficientError(f"Значение коэффициента должно быть положительным, получено {value}")
    return CoefficientField(np.full(_fine_shape(fine), float(value)))


def _rasterize(fine, rectangles):
    """
    Отмечает мелкие ячейки, пересекающиеся с прямоугольниками.

    Args:
        fine (FineGrid): Мелкая сетка
        rectangles (list): Кортежи (x0, x1, y0, y1) в единицах 1/_UNITS

    Returns:
        np.ndarray: Булева маска (ny, nx)
    """
    mask = np.zeros(_fine_shape(fine), dtype=bool)
    cx = np.arange(fine.nx)
    cy = np.arange(fine.ny)
    for x0, x1, y0, y1 in rectangles:
        # ячейка [c/nx, (c+1)/nx] пересекается с (x0, x1) в целочисленной арифметике
        col = ((cx + 1) * _UNITS > x0 * fine.nx) & (cx * _UNITS < x1 * fine.nx)
        row = ((cy + 1) * _UNITS > y0 * fine.ny) & (cy * _UNITS < y1 * fine.ny)
        mask |= np.outer(row, col)
    return mask


def _inclusion_rectangles(rng, count):
    sizes = rng.integers(6, 21, size=(count, 2))
    rects = []
    for w, hgt in sizes:
        x0 = int(rng.integers(0, _UNITS - w))
        y0 = int(rng.integers(0, _UNITS - hgt))
        rects.append((x0, x0 + int(w), y0, y0 + int(hgt)))
    return rects


def _channel_rectangles(rng, horizontal, vertical):
    rects = []
    for _ in range(horizontal):
        thickness = int(rng.integers(3, 9))
        length = int(rng.integers(160, 420))
        x0 = int(rng.integers(0, _UNITS - length))
        y0 = int(rng.integers(8, _UNITS - 8 - thickness))
        rects.append((x0, x0 + length, y0, y0 + thickness))
    for _ in range(vertical):
        thickness = int(rng.integers(3, 9))
        length = int(rng.integers(96, 256))
        y0 = int(rng.integers(0, _UNITS - length))
        x0 = int(rng.integers(8, _UNITS - 8 - thickness))
        rects.append((x0, x0 + thickness, y0, y0 + length))
    return rects


def synthetic_field(fine, kind, contrast, seed):
    """
    Синтетическое высококонтрастное поле: фон 1, включения со значением contrast.

    Args:
        fine (FineGrid): Мелкая сетка
        kind (str): 'channels', 'inclusions' или 'mixed'
        contrast (float): Значение κ в особенностях, не меньше 1
        seed (int): Зерно генератора PCG64

    Returns:
        CoefficientField: Поле, воспроизводимое на любой платформе
    """
    if kind not in SYNTHETIC_KINDS:
        raise CoefficientError(f"Неизвестный вид синтетического поля: {kind}")
    if not contrast >= 1.0:
        raise CoefficientError(f"Контраст должен быть не меньше 1, получено {contrast}")
    rng = np.random.default_rng(seed)
    if kind == 'inclusions':
        rects = _inclusion_rectangles(rng, 48)
    elif kind == 'channels':
        rects = _channel_rectangles(rng, 8, 4)
    else:
        rects = _channel_rectangles(rng, 6, 2) + _inclusion_rectangles(rng, 24)
    mask = _rasterize(fine, rects)
    values = np.where(mask, float(contrast), 1.0)
    logger.debug(f"Синтетическое поле {kind}: контраст {contrast:g}, доля включений {mask.mean():.3f}")
    return CoefficientField(values)


def preset_names():
    return sorted(PRESETS)


def preset_field(name, fine, contrast=None):
    """
    Поле из сохранённого пресета.

    Args:
        name (str): Имя пресета
        fine (FineGrid): Мелкая сетка
        contrast (float, optional): Замена контраста пресета

    Returns:
        CoefficientField: Поле пресета
    """
    if name not in PRESETS:
        raise CoefficientError(f"Неизвестный пресет '{name}'. Доступны: {', '.join(preset_names())}")
    kind, default_contrast, seed = PRESETS[name]
    return synthetic_field(fine, kind, default_contrast if contrast is None else contrast, seed)


def load_raster(path, fine):
    """
    Читает растр проницаемости и переносит его на мелкую сетку по ближайшей ячейке.

    Формат: первая строка "nx ny", затем nx*ny положительных чисел построчно,
    строка 0 снизу.

    Args:
        path (str | Path): Путь к файлу
        fine (FineGrid): Мелкая сетка

    Returns:
        CoefficientField: Поле на мелкой сетке
    """
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as e:
        raise CoefficientError(f"Не удалось прочитать растр {path}: {e}") from e
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise CoefficientError(f"Пустой файл растра: {path}")
    header = lines[0].split()
    try:
        if len(header) != 2:
            raise ValueError(header)
        nx, ny = int(header[0]), int(header[1])
    except ValueError:
        raise CoefficientError(f"Некорректный заголовок растра '{lines[0]}', ожидается 'nx ny'") from None
    if nx <= 0 or ny <= 0:
        raise CoefficientError(f"Размеры растра должны быть положительными: {nx}x{ny}")
    try:
        values = np.array(' '.join(lines[1:]).split(), dtype=float)
    except ValueError as e:
        raise CoefficientError(f"Некорректное значение в растре {path}: {e}") from e
    if values.size != nx * ny:
        raise CoefficientError(f"Растр {nx}x{ny} должен содержать {nx * ny} значений, найдено {values.size}")
    if not np.all(np.isfinite(values)) or np.any(values <= 0.0):
        bad = int(np.flatnonzero(~(values > 0.0))[0]) if np.any(~(values > 0.0)) else -1
        raise CoefficientError(f"Растр содержит неположительное или нечисловое значение (позиция {bad})")
    raster = values.reshape(ny, nx)
    cols = ((2 * np.arange(fine.nx) + 1) * nx) // (2 * fine.nx)
    rows = ((2 * np.arange(fine.ny) + 1) * ny) // (2 * fine.ny)
    logger.info(f"Растр {path.name} {nx}x{ny} перенесён на сетку {fine.nx}x{fine.ny}")
    return CoefficientField(raster[np.ix_(rows, cols)])


def save_raster(field, path):
    """
    Сохраняет поле в формате растра, читаемом load_raster.

    Args:
        field (CoefficientField): Поле
        path (str | Path): Путь к файлу
    """
    ny, nx = field.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(f"{nx} {ny}\n")
        for row in field.values:
            f.write(' '.join(f"{v:.17g}" for v in row) + '\n')
    logger.info(f"Поле {nx}x{ny} сохранено в {path}")


def weighted_coefficient(field, pou):
    """
    Взвешенный коэффициент κ̃ = H^2 κ Σ_i |∇χ_i|^2 с усреднением двух треугольников ячейки.

    Args:
        field (CoefficientField): Коэффициент κ
        pou (PouBasis): Полный набор функций разбиения единицы

    Returns:
        WeightedCoefficient: κ̃ и κ̃^{-1} по ячейкам
    """
    fine = pou.grids.fine
    if field.shape != _fine_shape(fine):
        raise CoefficientError(f"Поле {field.shape} не согласовано с сеткой {_fine_shape(fine)}")
    gx, gy = gradient_operators(fine)
    dx = (gx @ pou.matrix).tocsr()
    dy = (gy @ pou.matrix).tocsr()
    per_triangle = np.asarray(dx.multiply(dx).sum(axis=1)).ravel() + np.asarray(dy.multiply(dy).sum(axis=1)).ravel()
    per_cell = 0.5 * (per_triangle[0::2] + per_triangle[1::2])
    values = pou.grids.H ** 2 * field.values * per_cell.reshape(_fine_shape(fine))
    inverse = np.ones_like(values)
    positive = values > 0.0
    inverse[positive] = 1.0 / values[positive]
    return WeightedCoefficient(values, inverse)
