"""
Модуль структурированных сеток.

Строит вложенные сетки над D=[0,1]^2: мелкую сетку из P1-треугольников,
грубую сетку, грубые окрестности узлов и рёбра их границ.
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from msfem import GridError

logger = logging.getLogger('msfem.mesh')


@dataclass(frozen=True)
class FineGrid:
    """
    Прямоугольная структурированная мелкая сетка (вся область или её часть).

    Узлы нумеруются построчно снизу вверх, ячейка (cx, cy) делится диагональю
    из левого нижнего угла в правый верхний на два треугольника.

    Attributes:
        nx, ny (int): Число ячеек по осям
        h (float): Шаг сетки
        ix0, iy0 (int): Смещение в глобальных индексах мелкой сетки
        n_domain (int): Число ячеек по оси во всей области D
    """
    nx: int
    ny: int
    h: float
    ix0: int = 0
    iy0: int = 0
    n_domain: int = 0

    @property
    def n_nodes(self):
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_cells(self):
        return self.nx * self.ny

    def node_index(self, ix, iy):
        return iy * (self.nx + 1) + ix

    @cached_property
    def node_ij(self):
        """Массив (n_nodes, 2) локальных индексов (ix, iy) узлов."""
        iy, ix = np.divmod(np.arange(self.n_nodes), self.nx + 1)
        return np.column_stack([ix, iy])

    @cached_property
    def coordinates(self):
        ij = self.node_ij
        return np.column_stack([(ij[:, 0] + self.ix0) * self.h, (ij[:, 1] + self.iy0) * self.h])

    @cached_property
    def triangles(self):
        """
        Таблица треугольников (2*n_cells, 3); треугольники 2c и 2c+1 лежат в ячейке c.

        Returns:
            np.ndarray: Индексы вершин против часовой стрелки
        """
        cy, cx = np.divmod(np.arange(self.n_cells), self.nx)
        n0 = cy * (self.nx + 1) + cx
        n1 = n0 + 1
        n2 = n0 + self.nx + 2
        n3 = n0 + self.nx + 1
        tri = np.empty((2 * self.n_cells, 3), dtype=np.int64)
        tri[0::2] = np.column_stack([n0, n1, n2])
        tri[1::2] = np.column_stack([n0, n2, n3])
        return tri

    @cached_property
    def boundary_nodes(self):
        ij = self.node_ij
        mask = (ij[:, 0] == 0) | (ij[:, 0] == self.nx) | (ij[:, 1] == 0) | (ij[:, 1] == self.ny)
        return np.flatnonzero(mask)

    @cached_property
    def domain_boundary_nodes(self):
        """Локальные индексы узлов, лежащих на границе всей области D."""
        gx = self.node_ij[:, 0] + self.ix0
        gy = self.node_ij[:, 1] + self.iy0
        n = self.n_domain
        mask = (gx == 0) | (gx == n) | (gy == 0) | (gy == n)
        return np.flatnonzero(mask)

    def subgrid(self, ix0, iy0, nx, ny):
        """
        Вырезает прямоугольную подсетку.

        Args:
            ix0, iy0 (int): Левый нижний угол в индексах ячеек этой сетки
            nx, ny (int): Размер подсетки в ячейках

        Returns:
            tuple: (FineGrid, номера узлов в этой сетке, номера ячеек в этой сетке)
        """
        if ix0 < 0 or iy0 < 0 or ix0 + nx > self.nx or iy0 + ny > self.ny:
            raise GridError(f"Подсетка [{ix0}:{ix0 + nx}]x[{iy0}:{iy0 + ny}] выходит за пределы сетки")
        sub = FineGrid(nx, ny, self.h, self.ix0 + ix0, self.iy0 + iy0, self.n_domain)
        jy, jx = np.meshgrid(np.arange(iy0, iy0 + ny + 1), np.arange(ix0, ix0 + nx + 1), indexing='ij')
        nodes = (jy * (self.nx + 1) + jx).ravel()
        cy, cx = np.meshgrid(np.arange(iy0, iy0 + ny), np.arange(ix0, ix0 + nx), indexing='ij')
        cells = (cy * self.nx + cx).ravel()
        return sub, nodes, cells


@dataclass(frozen=True)
class CoarseGrid:
    """
    Грубая сетка: nx x nx квадратных ячеек размера H, каждая из n x n мелких.

    Грубые узлы O_i нумеруются как I + J*(nx+1), грубые ячейки как cx + cy*nx.
    """
    nx: int
    n: int

    @property
    def H(self):
        return 1.0 / self.nx

    @property
    def n_nodes(self):
        return (self.nx + 1) ** 2

    @property
    def n_cells(self):
        return self.nx ** 2

    def node_ij(self, i):
        J, I = divmod(i, self.nx + 1)
        return I, J

    @cached_property
    def node_coordinates(self):
        J, I = np.divmod(np.arange(self.n_nodes), self.nx + 1)
        return np.column_stack([I * self.H, J * self.H])

    def is_boundary_node(self, i):
        I, J = self.node_ij(i)
        return I in (0, self.nx) or J in (0, self.nx)

    @cached_property
    def interior_nodes(self):
        return tuple(i for i in range(self.n_nodes) if not self.is_boundary_node(i))

    @cached_property
    def neighborhoods(self):
        """Для каждого грубого узла кортеж грубых ячеек, содержащих его."""
        result = []
        for i in range(self.n_nodes):
            I, J = self.node_ij(i)
            cells = []
            for cy in (J - 1, J):
                for cx in (I - 1, I):
                    if 0 <= cx < self.nx and 0 <= cy < self.nx:
                        cells.append(cx + cy * self.nx)
            result.append(tuple(cells))
        return tuple(result)

    def cell_corners(self, K):
        """Грубые узлы ячейки K в порядке: левый нижний, правый нижний, правый верхний, левый верхний."""
        cy, cx = divmod(K, self.nx)
        base = cx + cy * (self.nx + 1)
        return (base, base + 1, base + self.nx + 2, base + self.nx + 1)


@dataclass(frozen=True)
class PatchEdge:
    """
    Отрезок границы локальной области, покрытый целым числом мелких рёбер.

    Attributes:
        nodes (np.ndarray): Локальные номера узлов слева направо или снизу вверх
        start (tuple): Координаты начала отрезка
        direction (str): 'x' для горизонтального, 'y' для вертикального
        length (float): Длина отрезка
    """
    nodes: np.ndarray
    start: tuple
    direction: str
    length: float

    @property
    def n_intervals(self):
        return len(self.nodes) - 1


@dataclass(frozen=True)
class LocalPatch:
    """
    Локальная прямоугольная область (грубая окрестность, ячейка или K+).

    Attributes:
        index (int): Номер грубого узла или грубой ячейки
        grid (FineGrid): Подсетка области
        global_nodes (np.ndarray): Глобальные номера локальных узлов
        global_cells (np.ndarray): Глобальные номера локальных ячеек
        interior (np.ndarray): Локальные узлы строго внутри области
        boundary (np.ndarray): Локальные узлы на границе области
        dirichlet (np.ndarray): Граничные узлы с нулевым условием (часть ∂D усечённой окрестности)
        edges (tuple): Отрезки Γ_{i,k} границы, не лежащие на ∂D усечённой окрестности
        truncated (bool): Окрестность граничного грубого узла
    """
    index: int
    grid: FineGrid
    global_nodes: np.ndarray
    global_cells: np.ndarray
    interior: np.ndarray
    boundary: np.ndarray
    dirichlet: np.ndarray
    edges: tuple
    truncated: bool = False

    @cached_property
    def trace(self):
        """Граничные узлы, на которых задаются данные (граница без условия Дирихле)."""
        return np.setdiff1d(self.boundary, self.dirichlet)

    @property
    def boundary_length(self):
        return float(sum(edge.length for edge in self.edges))

    @cached_property
    def boundary_segments(self):
        """Мелкие рёбра на отрезках Γ_{i,k}: массив (m, 2) локальных номеров."""
        pairs = [np.column_stack([e.nodes[:-1], e.nodes[1:]]) for e in self.edges]
        if not pairs:
            return np.empty((0, 2), dtype=np.int64)
        return np.vstack(pairs)


@dataclass(frozen=True)
class BrokenLayout:
    """
    Разрывная по грубым рёбрам нумерация: каждая грубая ячейка имеет свои (n+1)^2 узла.

    Attributes:
        n_dofs (int): Число разрывных степеней свободы
        triangles (np.ndarray): Треугольники мелкой сетки в разрывной нумерации
        restriction (sp.csr_matrix): Оператор сужения непрерывной функции на ячейки
        cell_dofs (np.ndarray): (n_cells, (n+1)^2) глобальные номера узлов для каждой ячейки
    """
    n_dofs: int
    triangles: np.ndarray
    restriction: sp.csr_matrix
    cell_dofs: np.ndarray


@dataclass(frozen=True)
class GridPair:
    """Пара вложенных сеток с топологией окрестностей и рёбер."""
    fine: FineGrid
    coarse: CoarseGrid
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def n(self):
        return self.coarse.n

    @property
    def H(self):
        return self.coarse.H

    @property
    def h(self):
        return self.fine.h

    def neighborhood(self, i):
        """
        Возвращает локальную карту степеней свободы окрестности ω_i.

        Args:
            i (int): Номер грубого узла

        Returns:
            LocalPatch: Окрестность с разбиением узлов и списком рёбер
        """
        key = ('omega', i)
        if key not in self._cache:
            self._cache[key] = self._build_neighborhood(i)
        return self._cache[key]

    def cell_patch(self, K):
        key = ('cell', K)
        if key not in self._cache:
            cy, cx = divmod(K, self.coarse.nx)
            n = self.n
            self._cache[key] = self._make_patch(K, cx * n, cy * n, n, n, truncated=False, split=None)
        return self._cache[key]

    def oversampled_patch(self, K, extra):
        """
        Область K+ : ячейка K, расширенная на extra мелких ячеек в каждую сторону и обрезанная по ∂D.

        Args:
            K (int): Номер грубой ячейки
            extra (int): Число дополнительных мелких ячеек

        Returns:
            tuple: (LocalPatch области K+, локальные номера узлов K внутри K+)
        """
        key = ('oversampled', K, extra)
        if key not in self._cache:
            cy, cx = divmod(K, self.coarse.nx)
            n, N = self.n, self.fine.nx
            x0, y0 = max(cx * n - extra, 0), max(cy * n - extra, 0)
            x1, y1 = min((cx + 1) * n + extra, N), min((cy + 1) * n + extra, N)
            patch = self._make_patch(K, x0, y0, x1 - x0, y1 - y0, truncated=False, split=None)
            jy, jx = np.meshgrid(np.arange(cy * n - y0, cy * n - y0 + n + 1),
                                 np.arange(cx * n - x0, cx * n - x0 + n + 1), indexing='ij')
            inner = (jy * (patch.grid.nx + 1) + jx).ravel()
            self._cache[key] = (patch, inner)
        return self._cache[key]

    @property
    def broken(self):
        """Разрывная раскладка для неконформных базисов с передискретизацией."""
        if 'broken' not in self._cache:
            self._cache['broken'] = self._build_broken()
        return self._cache['broken']

    def _build_neighborhood(self, i):
        coarse, n = self.coarse, self.n
        I, J = coarse.node_ij(i)
        x0, x1 = max(I - 1, 0) * n, min(I + 1, coarse.nx) * n
        y0, y1 = max(J - 1, 0) * n, min(J + 1, coarse.nx) * n
        truncated = coarse.is_boundary_node(i)
        patch = self._make_patch(i, x0, y0, x1 - x0, y1 - y0, truncated=truncated,
                                 split=n if truncated else None)
        logger.debug(f"Окрестность {i}: {patch.grid.nx}x{patch.grid.ny} ячеек, "
                     f"{len(patch.edges)} рёбер, усечённая={truncated}")
        return patch

    def _make_patch(self, index, x0, y0, nx, ny, truncated, split):
        grid, nodes, cells = self.fine.subgrid(x0, y0, nx, ny)
        boundary = grid.boundary_nodes
        interior = np.setdiff1d(np.arange(grid.n_nodes), boundary)
        N = self.fine.nx
        # стороны: (имя, лежит ли на ∂D)
        sides = [
            ('bottom', y0 == 0),
            ('right', x0 + nx == N),
            ('top', y0 + ny == N),
            ('left', x0 == 0),
        ]
        edges = []
        for side, on_domain_boundary in sides:
            if truncated and on_domain_boundary:
                continue
            edges.extend(self._side_edges(grid, side, split))
        if truncated:
            dirichlet = np.intersect1d(boundary, grid.domain_boundary_nodes)
        else:
            dirichlet = np.empty(0, dtype=np.int64)
        return LocalPatch(index, grid, nodes, cells, interior, boundary, dirichlet, tuple(edges), truncated)

    def _side_edges(self, grid, side, split):
        h = grid.h
        if side in ('bottom', 'top'):
            iy = 0 if side == 'bottom' else grid.ny
            full = iy * (grid.nx + 1) + np.arange(grid.nx + 1)
            direction = 'x'
        else:
            ix = grid.nx if side == 'right' else 0
            full = np.arange(grid.ny + 1) * (grid.nx + 1) + ix
            direction = 'y'
        step = split or (len(full) - 1)
        pieces = []
        for start in range(0, len(full) - 1, step):
            nodes = full[start:start + step + 1]
            ij = grid.node_ij[nodes[0]]
            origin = ((ij[0] + grid.ix0) * h, (ij[1] + grid.iy0) * h)
            pieces.append(PatchEdge(nodes, origin, direction, (len(nodes) - 1) * h))
        return pieces

    def _build_broken(self):
        coarse, fine, n = self.coarse, self.fine, self.n
        local = (n + 1) ** 2
        cell_dofs = np.empty((coarse.n_cells, local), dtype=np.int64)
        triangles = np.empty_like(fine.triangles)
        for K in range(coarse.n_cells):
            patch = self.cell_patch(K)
            cell_dofs[K] = patch.global_nodes
            offset = K * local
            tri_ids = np.column_stack([2 * patch.global_cells, 2 * patch.global_cells + 1]).ravel()
            triangles[tri_ids] = patch.grid.triangles + offset
        n_dofs = coarse.n_cells * local
        restriction = sp.csr_matrix(
            (np.ones(n_dofs), (np.arange(n_dofs), cell_dofs.ravel())),
            shape=(n_dofs, fine.n_nodes),
        )
        return BrokenLayout(n_dofs, triangles, restriction, cell_dofs)


def _is_power_of_two(value):
    return value >= 1 and (value & (value - 1)) == 0


def build_grids(nx_coarse, n):
    """
    Строит пару вложенных сеток над единичным квадратом.

    Args:
        nx_coarse (int): Число грубых ячеек по оси (не меньше 2)
        n (int): Коэффициент измельчения H/h, степень двойки не меньше 2

    Returns:
        GridPair: Согласованные мелкая и грубая сетки
    """
    if int(nx_coarse) != nx_coarse or nx_coarse < 2:
        raise GridError(f"Число грубых ячеек должно быть целым и не меньше 2, получено {nx_coarse}")
    if int(n) != n or n < 2 or not _is_power_of_two(int(n)):
        raise GridError(
            f"Коэффициент измельчения n={n} должен быть степенью двойки не меньше 2, "
            f"чтобы уровни вейвлетов совпадали с мелкими рёбрами"
        )
    nx_coarse, n = int(nx_coarse), int(n)
    nx_fine = nx_coarse * n
    fine = FineGrid(nx_fine, nx_fine, 1.0 / nx_fine, 0, 0, nx_fine)
    coarse = CoarseGrid(nx_coarse, n)
    logger.debug(f"Сетки построены: H=1/{nx_coarse}, h=1/{nx_fine}, {fine.n_nodes} мелких узлов")
    return GridPair(fine, coarse)


def neighborhood_dofs(grids, i):
    """
    Локальная карта степеней свободы окрестности ω_i.

    Args:
        grids (GridPair): Пара сеток
        i (int): Номер грубого узла

    Returns:
        LocalPatch: Биекция локальных и глобальных узлов, разбиение на внутренние и граничные, рёбра
    """
    if not 0 <= i < grids.coarse.n_nodes:
        raise GridError(f"Нет грубого узла с номером {i}")
    return grids.neighborhood(i)
