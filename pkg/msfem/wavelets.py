"""
Модуль вейвлетов Хаара и иерархического базиса на [0, 1].

Вычисляет функции иерархий, L2-проекцию на V_ℓ по базису Хаара и наборы
граничных функций, сэмплированных на рёбрах грубых окрестностей.
"""
import logging
from dataclasses import dataclass

import numpy as np

from msfem import WaveletError

logger = logging.getLogger('msfem.wavelets')

HAAR = 'haar'
HIERARCHICAL = 'hierarchical'
KINDS = (HAAR, HIERARCHICAL)


@dataclass(frozen=True)
class WaveletSpec:
    """
    Вид иерархии и уровень ℓ.

    Attributes:
        kind (str): 'haar' или 'hierarchical'
        level (int): Уровень ℓ >= 0
    """
    kind: str
    level: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise WaveletError(f"Неизвестный вид вейвлетов: {self.kind}")
        if int(self.level) != self.level or self.level < 0:
            raise WaveletError(f"Уровень должен быть целым неотрицательным, получено {self.level}")

    @property
    def dimension(self):
        """dim V_ℓ: 2^ℓ для Хаара, 2^ℓ + 1 для иерархического базиса."""
        return 2 ** self.level if self.kind == HAAR else 2 ** self.level + 1

    def labels(self):
        return haar_labels(self.level) if self.kind == HAAR else hierarchical_labels(self.level)


@dataclass(frozen=True)
class EdgeBasisSet:
    """
    Функции V_ℓ, сэмплированные на одном ребре Γ_{i,k}.

    Attributes:
        edge (PatchEdge): Ребро
        spec (WaveletSpec): Вид и уровень
        labels (tuple): Пары (уровень, сдвиг) для каждой функции
        samples (np.ndarray): (число функций, число точек): для Хаара значения на мелких
            отрезках ребра, для иерархического базиса значения в мелких узлах
    """
    edge: object
    spec: WaveletSpec
    labels: tuple
    samples: np.ndarray

    def nodal_data(self):
        """
        Узловые данные на узлах ребра.

        Для Хаара значение в узле равно среднему соседних отрезков; вне ребра
        функция считается нулевой, поэтому концы получают половину значения
        крайнего отрезка.

        Returns:
            np.ndarray: (число функций, число узлов ребра)
        """
        if self.spec.kind == HIERARCHICAL:
            return self.samples.copy()
        padded = np.pad(self.samples, ((0, 0), (1, 1)))
        return 0.5 * (padded[:, :-1] + padded[:, 1:])


def haar_labels(level):
    labels = [(0, 0)]
    for m in range(1, level + 1):
        labels.extend((m, j) for j in range(2 ** (m - 1)))
    return tuple(labels)


def hierarchical_labels(level):
    labels = [(0, 0), (0, 1)]
    for m in range(1, level + 1):
        labels.extend((m, j) for j in range(1, 2 ** m, 2))
    return tuple(labels)


def haar_function(level, j, x):
    """
    Вейвлет Хаара ψ_{ℓ,j}(x) = 2^{(ℓ-1)/2} ψ(2^{ℓ-1} x - j); при ℓ = 0 масштабирующая функция.

    На двоичных точках разрыва берётся значение с левого замкнутого подынтервала;
    точка x = 1 относится к последнему подынтервалу.

    Args:
        level (int): Уровень ℓ
        j (int): Сдвиг, 0 <= j <= 2^{ℓ-1} - 1
        x (float | np.ndarray): Точки из [0, 1]

    Returns:
        float | np.ndarray: Значения
    """
    x = np.asarray(x, dtype=float)
    inside = (x >= 0.0) & (x <= 1.0)
    if level == 0:
        if j != 0:
            raise WaveletError(f"На уровне 0 допустим только сдвиг 0, получено {j}")
        result = np.where(inside, 1.0, 0.0)
        return result if result.ndim else float(result)
    if level < 0:
        raise WaveletError(f"Уровень должен быть неотрицательным, получено {level}")
    count = 2 ** (level - 1)
    if not 0 <= j < count:
        raise WaveletError(f"Сдвиг {j} вне диапазона [0, {count - 1}] для уровня {level}")
    scale = 2.0 ** ((level - 1) / 2.0)
    t = count * x - j
    value = np.where((t >= 0.0) & (t < 0.5), scale, 0.0)
    value = np.where((t >= 0.5) & (t < 1.0), -scale, value)
    # правый конец отрезка [0, 1]
    value = np.where((x == 1.0) & (j == count - 1), -scale, value)
    result = np.where(inside, value, 0.0)
    return result if result.ndim else float(result)


def hierarchical_function(level, j, x):
    """
    Функция иерархического базиса 1 - |x/h_ℓ - j| на своём носителе, h_ℓ = 2^{-ℓ}.

    Args:
        level (int): Уровень ℓ
        j (int): Индекс из B_ℓ: {0, 1} при ℓ = 0, нечётный при ℓ > 0
        x (float | np.ndarray): Точки из [0, 1]

    Returns:
        float | np.ndarray: Значения
    """
    if level < 0:
        raise WaveletError(f"Уровень должен быть неотрицательным, получено {level}")
    if level == 0:
        valid = j in (0, 1)
    else:
        valid = j % 2 == 1 and 0 < j < 2 ** level
    if not valid:
        raise WaveletError(f"Индекс {j} не принадлежит множеству B_{level}")
    x = np.asarray(x, dtype=float)
    inside = (x >= 0.0) & (x <= 1.0)
    value = np.maximum(0.0, 1.0 - np.abs(x * 2.0 ** level - j))
    result = np.where(inside, value, 0.0)
    return result if result.ndim else float(result)


def _check_samples(v, level):
    v = np.asarray(v, dtype=float).ravel()
    n_intervals = v.size - 1
    if n_intervals < 1 or n_intervals & (n_intervals - 1):
        raise WaveletError(f"Ожидается двоичная сетка на [0, 1], получено {v.size} отсчётов")
    if n_intervals < 2 ** level:
        raise WaveletError(f"Разрешение {n_intervals} интервалов недостаточно для уровня {level}")
    return v, n_intervals


def project_L2(v, level):
    """
    Коэффициенты (v, ψ) L2-проекции на V_ℓ по базису Хаара.

    v задаётся значениями в узлах двоичной сетки и понимается как
    кусочно-линейная функция; интегралы вычисляются точно.

    Args:
        v (np.ndarray): Значения в N+1 узлах, N = 2^L >= 2^ℓ
        level (int): Уровень ℓ

    Returns:
        np.ndarray: Коэффициенты в порядке haar_labels(level)
    """
    v, n_intervals = _check_samples(v, level)
    segment_means = 0.5 * (v[:-1] + v[1:])
    midpoints = (np.arange(n_intervals) + 0.5) / n_intervals
    coefficients = [
        float(np.sum(segment_means * haar_function(m, j, midpoints)) / n_intervals)
        for m, j in haar_labels(level)
    ]
    return np.array(coefficients)


def reconstruct(coefficients, level, n_intervals):
    """Значения Σ c ψ на n_intervals равных отрезках [0, 1]."""
    midpoints = (np.arange(n_intervals) + 0.5) / n_intervals
    values = np.zeros(n_intervals)
    for c, (m, j) in zip(coefficients, haar_labels(level)):
        values += c * haar_function(m, j, midpoints)
    return values


def interval_means(v, level):
    """
    P_ℓ v как средние по 2^ℓ двоичным отрезкам.

    Args:
        v (np.ndarray): Значения в узлах двоичной сетки
        level (int): Уровень ℓ

    Returns:
        np.ndarray: 2^ℓ средних значений
    """
    v, n_intervals = _check_samples(v, level)
    segment_means = 0.5 * (v[:-1] + v[1:])
    return segment_means.reshape(2 ** level, -1).mean(axis=1)


def projection_error(v, level):
    """
    Точная норма ||v - P_ℓ v||_{L2(0,1)} для кусочно-линейной v.

    Args:
        v (np.ndarray): Значения в узлах двоичной сетки
        level (int): Уровень ℓ

    Returns:
        float: Ошибка проекции
    """
    v, n_intervals = _check_samples(v, level)
    means = np.repeat(interval_means(v, level), n_intervals // 2 ** level)
    a = v[:-1] - means
    b = v[1:] - means
    width = 1.0 / n_intervals
    return float(np.sqrt(np.sum(width * (a * a + a * b + b * b) / 3.0)))


def hierarchical_surplus(v, level):
    """
    Коэффициенты интерполянта по иерархическому базису (иерархические излишки).

    Args:
        v (np.ndarray): Значения в узлах двоичной сетки
        level (int): Уровень ℓ

    Returns:
        np.ndarray: Коэффициенты в порядке hierarchical_labels(level)
    """
    v, n_intervals = _check_samples(v, level)
    x = np.arange(n_intervals + 1) / n_intervals
    interpolant = np.zeros_like(v)
    coefficients = []
    for m, j in hierarchical_labels(level):
        node = int(round(j * n_intervals / 2 ** m))
        surplus = v[node] - interpolant[node]
        coefficients.append(surplus)
        interpolant += surplus * hierarchical_function(m, j, x)
    return np.array(coefficients)


def edge_basis(edge, spec):
    """
    Все функции V_ℓ, перенесённые аффинно с ребра на [0, 1] и сэмплированные на его мелкой сетке.

    Args:
        edge (PatchEdge): Ребро Γ_{i,k} с упорядоченными узлами
        spec (WaveletSpec): Вид и уровень

    Returns:
        EdgeBasisSet: Функции ребра
    """
    m = edge.n_intervals
    if m < 2 ** spec.level or m % 2 ** spec.level:
        raise WaveletError(
            f"Ребро из {m} мелких отрезков не поддерживает уровень {spec.level} (нужно кратное {2 ** spec.level})"
        )
    labels = spec.labels()
    if spec.kind == HAAR:
        points = (np.arange(m) + 0.5) / m
        samples = np.array([haar_function(lvl, j, points) for lvl, j in labels])
    else:
        points = np.arange(m + 1) / m
        samples = np.array([hierarchical_function(lvl, j, points) for lvl, j in labels])
    return EdgeBasisSet(edge, spec, labels, samples)
