"""
Модуль обработки значений файла исследования.

Отвечает за разбор и нормализацию строковых значений перед валидацией.
"""
import re
from fractions import Fraction

import numpy as np

from src.setup import logger


class ValueParseError(ValueError):
    """Строковое значение не удалось разобрать."""


def parse_list(value):
    """
    Разбивает значение на элементы по запятым.

    Args:
        value (str): Исходное значение, например "0, 1,2"

    Returns:
        list: Непустые элементы без пробелов, например ["0", "1", "2"]
    """
    if value is None:
        return []
    return [item.strip() for item in str(value).split(',') if item.strip()]


def parse_fraction(value):
    """
    Преобразует размер грубой ячейки H в число грубых ячеек по оси.

    Args:
        value (str): H в виде "1/16" или "0.0625"

    Returns:
        int: Число грубых ячеек 1/H
    """
    text = str(value).strip()
    try:
        h = Fraction(text) if '/' in text else Fraction(text).limit_denominator(1 << 20)
    except (ValueError, ZeroDivisionError):
        raise ValueParseError(f"Некорректное значение H: '{value}'") from None
    if h <= 0 or h >= 1:
        raise ValueParseError(f"H должно лежать в (0, 1), получено '{value}'")
    inverse = 1 / h
    if inverse.denominator != 1:
        raise ValueParseError(f"1/H должно быть целым, получено H = '{value}'")
    logger.debug(f"Значение H '{value}' преобразовано в {inverse.numerator} грубых ячеек")
    return int(inverse.numerator)


def parse_int_list(value, name):
    """Список целых чисел, например уровней ℓ или значений N_b."""
    result = []
    for item in parse_list(value):
        if not re.fullmatch(r'[+-]?\d+', item):
            raise ValueParseError(f"Ключ {name}: '{item}' не является целым числом")
        result.append(int(item))
    return result


def parse_bool(value):
    text = str(value).strip().lower()
    if text in ('1', 'true', 'yes', 'on'):
        return True
    if text in ('0', 'false', 'no', 'off', ''):
        return False
    raise ValueParseError(f"Некорректное логическое значение: '{value}'")


def parse_source(value):
    """
    Разбирает описание правой части f.

    Args:
        value (str): "1", "const:<c>" или "sin"

    Returns:
        str: Нормализованное описание: "const:<c>" или "sin"
    """
    text = str(value or '1').strip().lower()
    if text == 'sin':
        return 'sin'
    if text.startswith('const:'):
        text = text[len('const:'):]
    try:
        constant = float(text)
    except ValueError:
        raise ValueParseError(f"Неизвестная правая часть: '{value}'") from None
    if not np.isfinite(constant):
        raise ValueParseError(f"Правая часть должна быть конечной: '{value}'")
    return f"const:{constant!r}"


def source_function(descriptor):
    """
    Правая часть по нормализованному описанию.

    Args:
        descriptor (str): Результат parse_source

    Returns:
        float | callable: Константа или f(x, y)
    """
    if descriptor == 'sin':
        return lambda x, y: 2.0 * np.pi ** 2 * np.sin(np.pi * x) * np.sin(np.pi * y)
    return float(descriptor.split(':', 1)[1])
