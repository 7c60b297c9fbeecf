"""
Модуль относительных погрешностей многомасштабного решения.

e_L2 = ||κ^{1/2}(u_ms - u_h)|| / ||κ^{1/2} u_h||,
e_H1 = sqrt(a(u_ms - u_h, u_ms - u_h) / a(u_h, u_h)).
Для разрывных решений используется поэлементная (разрывная) форма.
"""
import logging
from dataclasses import dataclass

import numpy as np

from msfem import MetricError
from msfem.fem_core import assemble_mass, assemble_stiffness

logger = logging.getLogger('msfem.metrics')


@dataclass
class ErrorReport:
    """
    Погрешности одного решения.

    Attributes:
        e_L2 (float): Относительная κ-взвешенная L2-погрешность
        e_H1 (float): Относительная энергетическая погрешность
        l2_numerator (float): ||κ^{1/2}(u_ms - u_h)||^2
        l2_denominator (float): ||κ^{1/2} u_h||^2
        energy_numerator (float): a(u_ms - u_h, u_ms - u_h)
        energy_denominator (float): a(u_h, u_h)
        dimension (int): Размерность пространства
        seconds (float): Время построения и решения
    """
    e_L2: float
    e_H1: float
    l2_numerator: float
    l2_denominator: float
    energy_numerator: float
    energy_denominator: float
    dimension: int = None
    seconds: float = None


def _aligned(u_ms, u_h):
    """Приводит пару функций к общей нумерации степеней свободы."""
    if u_ms.grid.n_nodes != u_h.grid.n_nodes:
        raise MetricError(f"Функции заданы на разных сетках: {u_ms.grid.n_nodes} и {u_h.grid.n_nodes} узлов")
    layout = u_ms.layout if u_ms.broken else u_h.layout
    ms, ref = u_ms.values, u_h.values
    if layout is not None:
        if not u_ms.broken:
            ms = layout.restriction @ ms
        if not u_h.broken:
            ref = layout.restriction @ ref
    return ms, ref, layout


def _form(kind, grid, field, layout):
    assemble = assemble_mass if kind == 'mass' else assemble_stiffness
    if layout is None:
        return assemble(grid, field)
    return assemble(grid, field, layout.triangles, layout.n_dofs)


def _relative(kind, u_ms, u_h, field):
    ms, ref, layout = _aligned(u_ms, u_h)
    matrix = _form(kind, u_h.grid, field, layout)
    diff = ms - ref
    numerator = max(float(diff @ (matrix @ diff)), 0.0)
    denominator = float(ref @ (matrix @ ref))
    if not denominator > 0.0:
        raise MetricError("Тривиальное эталонное решение: знаменатель относительной погрешности равен нулю")
    return numerator, denominator


def weighted_l2_error(u_ms, u_h, field):
    """
    Относительная κ-взвешенная L2-погрешность с точными P1-формулами на треугольниках.

    Args:
        u_ms (FineFunction): Многомасштабное решение (возможно разрывное)
        u_h (FineFunction): Эталонное решение
        field (CoefficientField): Коэффициент κ

    Returns:
        float: e_L2
    """
    numerator, denominator = _relative('mass', u_ms, u_h, field)
    return float(np.sqrt(numerator / denominator))


def energy_error(u_ms, u_h, field):
    """
    Относительная энергетическая погрешность.

    Args:
        u_ms (FineFunction): Многомасштабное решение (возможно разрывное)
        u_h (FineFunction): Эталонное решение
        field (CoefficientField): Коэффициент κ

    Returns:
        float: e_H1
    """
    numerator, denominator = _relative('stiffness', u_ms, u_h, field)
    return float(np.sqrt(numerator / denominator))


def error_report(u_ms, u_h, field, dimension=None, seconds=None):
    """Обе погрешности вместе с числителями и знаменателями."""
    l2 = _relative('mass', u_ms, u_h, field)
    energy = _relative('stiffness', u_ms, u_h, field)
    report = ErrorReport(
        e_L2=float(np.sqrt(l2[0] / l2[1])),
        e_H1=float(np.sqrt(energy[0] / energy[1])),
        l2_numerator=l2[0],
        l2_denominator=l2[1],
        energy_numerator=energy[0],
        energy_denominator=energy[1],
        dimension=dimension,
        seconds=seconds,
    )
    logger.debug(f"Погрешности: e_L2={report.e_L2:.4e}, e_H1={report.e_H1:.4e}")
    return report
