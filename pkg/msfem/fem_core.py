"""
Модуль P1-сборки и решения разреженных систем.

Собирает матрицы жёсткости, масс и граничных масс на структурированной
треугольной сетке, исключает условия Дирихле и решает симметричные системы
прямым разложением или методом сопряжённых градиентов.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg, splu
from scipy.sparse.linalg import norm as sparse_norm

from msfem import SolverError

logger = logging.getLogger('msfem.fem_core')

# Порог числа свободных степеней свободы для прямого разложения
DIRECT_LIMIT = 50000
CG_MAXITER = 20000
# Уровень округления для критерия остановки CG в единицах ||A|| ||x||
ROUNDING_FLOOR = 16.0 * np.finfo(float).eps

# Градиенты базисных функций на двух типах треугольников (в единицах 1/h):
# нижний (n0, n1, n2) и верхний (n0, n2, n3)
_GRAD_LOWER = np.array([[-1.0, 1.0, 0.0], [0.0, -1.0, 1.0]])
_GRAD_UPPER = np.array([[0.0, 1.0, -1.0], [-1.0, 0.0, 1.0]])
_MASS_REF = (np.ones((3, 3)) + np.eye(3)) / 12.0


@dataclass
class FineFunction:
    """
    Функция из V_h, заданная значениями в мелких узлах.

    Attributes:
        grid: Мелкая сетка (или пара сеток для разрывной раскладки)
        values (np.ndarray): Узловые коэффициенты
        layout: BrokenLayout, если функция разрывна по грубым рёбрам
    """
    grid: object
    values: np.ndarray
    layout: object = None

    @property
    def broken(self):
        return self.layout is not None


@dataclass
class SparseSystem:
    """
    Симметричная разреженная система с ограничениями Дирихле.

    Attributes:
        matrix (sp.csr_matrix): Симметричная матрица
        rhs (np.ndarray): Вектор нагрузки
        constrained (np.ndarray): Номера закреплённых степеней свободы
        values (np.ndarray): Предписанные значения в закреплённых степенях свободы
        grid: Сетка, к которой относится решение
    """
    matrix: sp.csr_matrix
    rhs: np.ndarray
    constrained: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    values: np.ndarray = field(default_factory=lambda: np.empty(0))
    grid: object = None


def _cell_values(field_or_values):
    return np.asarray(getattr(field_or_values, 'values', field_or_values), dtype=float)


def _element_tables(grid, triangles, n_dofs):
    if triangles is None:
        return grid.triangles, grid.n_nodes if n_dofs is None else n_dofs
    if n_dofs is None:
        n_dofs = int(triangles.max()) + 1
    return triangles, n_dofs


def _scatter(triangles, local, n_dofs):
    """Собирает матрицу из элементных блоков local формы (n_tri, 3, 3)."""
    rows = np.repeat(triangles, 3, axis=1).ravel()
    cols = np.tile(triangles, (1, 3)).ravel()
    matrix = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n_dofs, n_dofs)).tocsr()
    matrix.sum_duplicates()
    return matrix


def gradient_operators(grid, triangles=None, n_dofs=None):
    """
    Операторы кусочно-постоянного градиента P1-функции на треугольниках.

    Args:
        grid (FineGrid): Мелкая сетка
        triangles (np.ndarray, optional): Треугольники в другой нумерации узлов
        n_dofs (int, optional): Число узлов в этой нумерации

    Returns:
        tuple: (Gx, Gy) разреженные матрицы (n_tri, n_dofs)
    """
    triangles, n_dofs = _element_tables(grid, triangles, n_dofs)
    n_tri = len(triangles)
    grads = np.empty((n_tri, 2, 3))
    grads[0::2] = _GRAD_LOWER / grid.h
    grads[1::2] = _GRAD_UPPER / grid.h
    rows = np.repeat(np.arange(n_tri), 3)
    cols = triangles.ravel()
    gx = sp.csr_matrix((grads[:, 0, :].ravel(), (rows, cols)), shape=(n_tri, n_dofs))
    gy = sp.csr_matrix((grads[:, 1, :].ravel(), (rows, cols)), shape=(n_tri, n_dofs))
    return gx, gy


def assemble_stiffness(grid, field, triangles=None, n_dofs=None):
    """
    Собирает матрицу жёсткости A_pq = Σ_T κ_T ∫_T ∇φ_p·∇φ_q.

    Args:
        grid (FineGrid): Мелкая сетка
        field: CoefficientField или массив значений κ по ячейкам (ny, nx)
        triangles (np.ndarray, optional): Треугольники в разрывной нумерации
        n_dofs (int, optional): Число степеней свободы разрывной нумерации

    Returns:
        sp.csr_matrix: Симметричная матрица жёсткости
    """
    kappa = _cell_values(field).ravel()
    if kappa.size != grid.n_cells:
        raise ValueError(f"Поле содержит {kappa.size} ячеек, сетка {grid.n_cells}")
    triangles, n_dofs = _element_tables(grid, triangles, n_dofs)
    area = 0.5 * grid.h ** 2
    lower = _GRAD_LOWER.T @ _GRAD_LOWER / grid.h ** 2 * area
    upper = _GRAD_UPPER.T @ _GRAD_UPPER / grid.h ** 2 * area
    local = np.empty((len(triangles), 3, 3))
    local[0::2] = kappa[:, None, None] * lower
    local[1::2] = kappa[:, None, None] * upper
    return _scatter(triangles, local, n_dofs)


def assemble_mass(grid, weight=None, triangles=None, n_dofs=None):
    """
    Собирает (взвешенную) матрицу масс с точными P1-формулами на треугольнике.

    Args:
        grid (FineGrid): Мелкая сетка
        weight: Поле или массив весов по ячейкам; по умолчанию 1
        triangles (np.ndarray, optional): Треугольники в разрывной нумерации
        n_dofs (int, optional): Число степеней свободы разрывной нумерации

    Returns:
        sp.csr_matrix: Матрица масс
    """
    triangles, n_dofs = _element_tables(grid, triangles, n_dofs)
    if weight is None:
        w = np.ones(grid.n_cells)
    else:
        w = _cell_values(weight).ravel()
    w_tri = np.repeat(w, 2)
    local = w_tri[:, None, None] * (_MASS_REF * 0.5 * grid.h ** 2)
    return _scatter(triangles, local, n_dofs)


def assemble_boundary_mass(grid, segments, n_dofs=None):
    """
    Собирает граничную матрицу масс по мелким рёбрам.

    Args:
        grid (FineGrid): Сетка, задающая длину ребра h
        segments (np.ndarray): Пары узлов (m, 2)
        n_dofs (int, optional): Размер матрицы, по умолчанию число узлов сетки

    Returns:
        sp.csr_matrix: Граничная матрица масс
    """
    n_dofs = grid.n_nodes if n_dofs is None else n_dofs
    local = grid.h / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])
    rows = np.repeat(segments, 2, axis=1).ravel()
    cols = np.tile(segments, (1, 2)).ravel()
    data = np.tile(local.ravel(), len(segments))
    matrix = sp.coo_matrix((data, (rows, cols)), shape=(n_dofs, n_dofs)).tocsr()
    matrix.sum_duplicates()
    return matrix


def nodal_values(grid, f):
    """
    Значения правой части в узлах мелкой сетки.

    Args:
        grid (FineGrid): Сетка
        f: Число, вызываемый объект f(x, y) или массив по узлам

    Returns:
        np.ndarray: Узловые значения
    """
    if callable(f):
        xy = grid.coordinates
        return np.asarray(f(xy[:, 0], xy[:, 1]), dtype=float) * np.ones(grid.n_nodes)
    values = np.asarray(f, dtype=float)
    if values.ndim == 0:
        return np.full(grid.n_nodes, float(values))
    if values.size != grid.n_nodes:
        raise ValueError(f"Правая часть задана в {values.size} узлах, сетка содержит {grid.n_nodes}")
    return values.ravel()


def assemble_load(grid, f, triangles=None, n_dofs=None):
    """
    Собирает вектор нагрузки для P1-интерполянта f (точная квадратура на треугольнике).

    Args:
        grid (FineGrid): Мелкая сетка
        f: Число, вызываемый объект f(x, y) или массив по узлам

    Returns:
        np.ndarray: Вектор нагрузки
    """
    values = nodal_values(grid, f)
    if triangles is None:
        return assemble_mass(grid) @ values
    # разрывная раскладка: значения f в узлах треугольников берутся из глобальной нумерации
    triangles, n_dofs = _element_tables(grid, triangles, n_dofs)
    local = values[grid.triangles] @ (_MASS_REF * 0.5 * grid.h ** 2)
    load = np.zeros(n_dofs)
    np.add.at(load, triangles.ravel(), local.ravel())
    return load


def assemble_cell_load(grid, cell_source):
    """
    Нагрузка от кусочно-постоянного по ячейкам источника: b_p = Σ_T s_T |T| / 3.

    Args:
        grid (FineGrid): Сетка
        cell_source (np.ndarray): Значения источника по ячейкам

    Returns:
        np.ndarray: Вектор нагрузки
    """
    s_tri = np.repeat(np.asarray(cell_source, dtype=float).ravel(), 2)
    contrib = np.repeat(s_tri * grid.h ** 2 / 6.0, 3)
    load = np.zeros(grid.n_nodes)
    np.add.at(load, grid.triangles.ravel(), contrib)
    return load


def dirichlet_system(matrix, rhs, nodes, values=0.0, grid=None):
    """Формирует SparseSystem с условиями Дирихле в узлах nodes."""
    nodes = np.asarray(nodes, dtype=np.int64)
    values = np.broadcast_to(np.asarray(values, dtype=float), nodes.shape).copy()
    return SparseSystem(sp.csr_matrix(matrix), np.asarray(rhs, dtype=float), nodes, values, grid)


def backward_error(matrix, x, rhs):
    """Нормированная обратная ошибка ||b - Ax|| / (||A||_inf ||x|| + ||b||)."""
    denominator = sparse_norm(matrix, np.inf) * np.linalg.norm(x) + np.linalg.norm(rhs)
    if denominator == 0.0:
        return 0.0
    return float(np.linalg.norm(rhs - matrix @ x) / denominator)


def _pcg(a_ff, rhs, tol, maxiter):
    # Первый проход оценивает ||x||, второй идёт до tol*||b|| или до уровня округления
    preconditioner = sp.diags(1.0 / a_ff.diagonal())
    x, _ = cg(a_ff, rhs, rtol=np.sqrt(min(tol, 1.0)), atol=0.0, maxiter=maxiter, M=preconditioner)
    floor = ROUNDING_FLOOR * sparse_norm(a_ff, np.inf) * np.linalg.norm(x)
    return cg(a_ff, rhs, x0=x, rtol=tol, atol=floor, maxiter=maxiter, M=preconditioner)


def solve(system, tol=1e-10, method='auto', direct_limit=None, maxiter=None):
    """
    Решает систему с исключением закреплённых степеней свободы.

    Метод выбирается по числу свободных степеней свободы: разложение splu
    до порога direct_limit, иначе метод сопряжённых градиентов с диагональным
    предобуславливателем. Решение принимается, если обратная ошибка
    (см. backward_error) не превышает tol.

    Args:
        system (SparseSystem): Система
        tol (float): Допустимая обратная ошибка на свободных степенях свободы
        method (str): 'auto', 'direct' или 'cg'
        direct_limit (int, optional): Порог для прямого метода
        maxiter (int, optional): Максимум итераций CG на проход

    Returns:
        FineFunction: Решение; закреплённые значения выставлены точно
    """
    matrix = sp.csr_matrix(system.matrix)
    n = matrix.shape[0]
    solution = np.zeros(n)
    solution[system.constrained] = system.values
    free_mask = np.ones(n, dtype=bool)
    free_mask[system.constrained] = False
    free = np.flatnonzero(free_mask)
    if free.size == 0:
        return FineFunction(system.grid, solution)

    a_ff = matrix[free][:, free]
    rhs = system.rhs[free] - matrix[free][:, system.constrained] @ system.values
    if np.linalg.norm(rhs) == 0.0:
        return FineFunction(system.grid, solution)

    limit = DIRECT_LIMIT if direct_limit is None else direct_limit
    if method == 'auto':
        method = 'direct' if free.size <= limit else 'cg'

    if method == 'direct':
        x = splu(a_ff.tocsc()).solve(rhs)
        info = 0
    elif method == 'cg':
        x, info = _pcg(a_ff, rhs, tol, maxiter or CG_MAXITER)
    else:
        raise ValueError(f"Неизвестный метод решения: {method}")

    error = backward_error(a_ff, x, rhs)
    if error > tol:
        if info != 0:
            raise SolverError(f"CG не сошёлся за {maxiter or CG_MAXITER} итераций, обратная ошибка {error:.3e}",
                              residual=error)
        raise SolverError(f"Обратная ошибка {error:.3e} превышает {tol:.1e}", residual=error)
    logger.debug(f"Решена система {free.size} неизвестных методом {method}, обратная ошибка {error:.2e}")
    solution[free] = x
    return FineFunction(system.grid, solution)


def fine_reference(grid, field, f, tol=1e-10, direct_limit=None, maxiter=None):
    """
    Мелкомасштабное решение u_h с однородным условием Дирихле на ∂D.

    Args:
        grid: FineGrid или GridPair
        field (CoefficientField): Коэффициент κ
        f: Правая часть (число, f(x, y) или массив по узлам)
        tol (float): Допустимая обратная ошибка

    Returns:
        FineFunction: Решение u_h
    """
    fine = getattr(grid, 'fine', grid)
    matrix = assemble_stiffness(fine, field)
    load = assemble_load(fine, f)
    system = dirichlet_system(matrix, load, fine.boundary_nodes, 0.0, fine)
    result = solve(system, tol=tol, direct_limit=direct_limit, maxiter=maxiter)
    logger.info(f"Мелкомасштабное решение получено: {fine.n_nodes} узлов")
    return result
