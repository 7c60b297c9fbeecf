"""
Модуль пула потоков для независимых локальных задач.

Выполняет работу по окрестностям параллельно и возвращает результаты
в порядке номеров окрестностей.
"""
import logging
import os
from concurrent.futures import ThreadPoolExecutor

logger = logging.getLogger('msfem.workers')


def default_workers():
    """Число доступных процессоров."""
    return os.cpu_count() or 1


def map_neighborhoods(func, indices, workers=1):
    """
    Применяет func к каждому номеру окрестности.

    Args:
        func (callable): Функция одного аргумента (номера окрестности)
        indices (iterable): Номера окрестностей
        workers (int): Число потоков; при workers <= 1 работа выполняется в текущем потоке

    Returns:
        list: Результаты в порядке indices
    """
    indices = list(indices)
    if workers is None or workers <= 1 or len(indices) <= 1:
        return [func(i) for i in indices]
    logger.debug(f"Запуск {len(indices)} локальных задач в {workers} потоках")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        # map сохраняет порядок входных номеров
        return list(pool.map(func, indices))
