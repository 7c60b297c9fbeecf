"""
Модуль конфигурации проекта EdgeMsFEM.

Загружает настройки из .env файла и предоставляет их другим модулям.
"""
import os
import logging
from pathlib import Path

from dotenv import load_dotenv

from msfem.workers import default_workers

# Загрузка переменных окружения из .env файла
load_dotenv()

# Базовые пути
BASE_DIR = Path(__file__).resolve().parent.parent


def _path_setting(name, default):
    value = Path(os.getenv(name, default))
    return value if value.is_absolute() else BASE_DIR / value


LOGS_DIR = _path_setting('MSFEM_LOG_DIR', 'logs')
RESULTS_DIR = _path_setting('MSFEM_OUT_DIR', 'results')

LOGS_DIR.mkdir(parents=True, exist_ok=True)

# Параметры решателей
SOLVER_TOL = float(os.getenv('MSFEM_SOLVER_TOL', '1e-10'))
DIRECT_LIMIT = int(os.getenv('MSFEM_DIRECT_LIMIT', '50000'))
CG_MAXITER = int(os.getenv('MSFEM_CG_MAXITER', '20000'))
WORKERS = int(os.getenv('MSFEM_WORKERS') or default_workers())

# Настройки для логирования
LOG_FILE = str(LOGS_DIR / 'edge_msfem.log')
LOG_LEVEL = getattr(logging, os.getenv('MSFEM_LOG_LEVEL', 'INFO').upper(), logging.INFO)


def get_results_dir():
    """
    Возвращает каталог результатов по умолчанию.

    Returns:
        Path: Абсолютный путь к каталогу результатов
    """
    return RESULTS_DIR


def setup_logging():
    """
    Настройка системы логирования.

    Обработчики подключаются к логгеру приложения и к логгеру пакета msfem.

    Returns:
        logging.Logger: Настроенный логгер
    """
    logger = logging.getLogger('edge_msfem')
    if logger.handlers:
        return logger
    logger.setLevel(logging.DEBUG)

    # Форматтер для логов
    formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')

    # Файловый handler - записывает все логи
    file_handler = logging.FileHandler(LOG_FILE, encoding='utf-8')
    file_handler.setLevel(logging.DEBUG)
    file_handler.setFormatter(formatter)

    # Консольный handler - уровень из MSFEM_LOG_LEVEL
    console_handler = logging.StreamHandler()
    console_handler.setLevel(LOG_LEVEL)
    console_handler.setFormatter(formatter)

    core_logger = logging.getLogger('msfem')
    core_logger.setLevel(logging.DEBUG)
    for target in (logger, core_logger):
        target.addHandler(file_handler)
        target.addHandler(console_handler)
        target.propagate = False

    return logger


# Создание логгера
logger = setup_logging()
