#!/usr/bin/env python3
"""
Runtime configuration and logging for compverify.
Settings come from the environment (optionally a .env file) with string defaults.
"""

import os
import logging
from dataclasses import dataclass
from dotenv import load_dotenv

# ==================== CONFIGURATION ====================

load_dotenv()

LOG_FORMAT = '%(asctime)s | %(levelname)-8s | %(name)s | %(funcName)s | %(message)s'
LOG_DATEFMT = '%Y-%m-%d %H:%M:%S'

_TRUE = {'1', 'true', 'yes', 'on'}


@dataclass(frozen=True)
class Settings:
    log_dir: str = 'logs'
    log_level: str = 'INFO'
    output_dir: str = 'artifacts'
    seed: int = 0
    count_sink: bool = True
    database_url: str = 'sqlite:///compverify_runs.db'


def get_settings() -> Settings:
    """Read settings from the environment"""
    return Settings(
        log_dir=os.getenv('COMPVERIFY_LOG_DIR', 'logs'),
        log_level=os.getenv('COMPVERIFY_LOG_LEVEL', 'INFO').upper(),
        output_dir=os.getenv('COMPVERIFY_OUTPUT_DIR', 'artifacts'),
        seed=int(os.getenv('COMPVERIFY_SEED', '0')),
        count_sink=os.getenv('COMPVERIFY_COUNT_SINK', 'true').strip().lower() in _TRUE,
        database_url=os.getenv('DATABASE_URL') or 'sqlite:///compverify_runs.db',
    )


# ==================== LOGGING ====================

_configured = False


def setup_logging(settings: Settings = None) -> logging.Logger:
    """
    Configure root logging: a DEBUG file log, an error-only file log and a
    console handler at the configured level. Calling it again is a no-op.
    """
    global _configured
    settings = settings or get_settings()
    if _configured:
        return logging.getLogger('compverify')

    os.makedirs(settings.log_dir, exist_ok=True)

    formatter = logging.Formatter(LOG_FORMAT, datefmt=LOG_DATEFMT)

    file_handler = logging.FileHandler(os.path.join(settings.log_dir, 'compverify.log'))
    file_handler.setFormatter(formatter)
    file_handler.setLevel(logging.DEBUG)

    error_handler = logging.FileHandler(os.path.join(settings.log_dir, 'errors.log'))
    error_handler.setFormatter(formatter)
    error_handler.setLevel(logging.ERROR)

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(formatter)
    console_handler.setLevel(getattr(logging, settings.log_level, logging.INFO))

    root_logger = logging.getLogger()
    root_logger.setLevel(logging.DEBUG)
    root_logger.addHandler(file_handler)
    root_logger.addHandler(error_handler)
    root_logger.addHandler(console_handler)

    _configured = True
    return logging.getLogger('compverify')
