"""
Пакет численного ядра краевых многомасштабных методов конечных элементов.

Содержит сетки, коэффициенты, P1-сборку, вейвлеты на рёбрах, локальные
решатели и построение многомасштабных пространств.
"""

__version__ = '0.3.0'


class MsfemError(Exception):
    """Базовое исключение численного ядра."""


class GridError(MsfemError):
    """Некорректные параметры сеток."""


class CoefficientError(MsfemError):
    """Некорректное поле коэффициента или файл растра."""


class WaveletError(MsfemError):
    """Некорректный уровень или индекс вейвлета."""


class SolverError(MsfemError):
    """Ошибка решения линейной системы или задачи на собственные значения."""

    def __init__(self, message, residual=None, neighborhood=None):
        super().__init__(message)
        self.residual = residual
        self.neighborhood = neighborhood


class DegenerateSourceError(SolverError):
    """Интеграл взвешенного коэффициента по окрестности равен нулю."""


class SingularSystemError(SolverError):
    """Редуцированная система вырождена даже после прореживания базиса."""

    def __init__(self, message, dependent_indices=()):
        super().__init__(message)
        self.dependent_indices = list(dependent_indices)


class MetricError(MsfemError):
    """Ошибка вычисления относительной погрешности."""
