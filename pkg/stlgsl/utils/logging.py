"""
Logging configuration for the ST-LGSL toolkit
Structured logging on stderr so CSV artifacts on stdout stay clean
"""

import logging
import logging.config
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import structlog

from ..config import settings


class StderrHandler(logging.StreamHandler):
    """Stream handler that writes to whatever sys.stderr is at emit time"""

    @property  # type: ignore[override]
    def stream(self):
        return sys.stderr

    @stream.setter
    def stream(self, value):
        pass


def setup_logging(level: Optional[str] = None) -> None:
    """Configure structured logging for the toolkit"""

    log_level = (level or settings.LOG_LEVEL).upper()
    handlers: List[str] = ["console"]

    # Configure standard logging
    logging_config: Dict[str, Any] = {
        "version": 1,
        "disable_existing_loggers": False,
        "formatters": {
            "simple": {"format": "%(message)s"},
            "json": {
                "()": "pythonjsonlogger.jsonlogger.JsonFormatter",
                "format": "%(asctime)s %(name)s %(levelname)s %(message)s",
            },
        },
        "handlers": {
            "console": {
                "()": StderrHandler,
                # structlog has already rendered console or JSON text
                "formatter": "simple",
                "level": log_level,
            },
        },
        "root": {"level": log_level, "handlers": handlers},
        "loggers": {
            "stlgsl": {
                "level": log_level,
                "handlers": handlers,
                "propagate": False,
            },
        },
    }

    # Rotating file log only when a directory is configured
    if settings.LOGS_DIR:
        log_dir = Path(settings.LOGS_DIR)
        log_dir.mkdir(parents=True, exist_ok=True)
        logging_config["handlers"]["file"] = {
            "class": "logging.handlers.RotatingFileHandler",
            "filename": str(log_dir / "stlgsl.log"),
            "maxBytes": 10485760,  # 10MB
            "backupCount": 5,
            "formatter": "json",
            "level": log_level,
        }
        handlers.append("file")

    logging.config.dictConfig(logging_config)

    final_renderer: Union[
        structlog.processors.JSONRenderer,
        structlog.dev.ConsoleRenderer
    ]

    if settings.LOG_FORMAT == "json":
        final_renderer = structlog.processors.JSONRenderer()
    else:
        final_renderer = structlog.dev.ConsoleRenderer(colors=False)

    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.processors.add_log_level,
            structlog.processors.StackInfoRenderer(),
            structlog.dev.set_exc_info,
            final_renderer,
        ],
        wrapper_class=structlog.make_filtering_bound_logger(
            logging.getLevelName(log_level)
        ),
        logger_factory=structlog.stdlib.LoggerFactory(),
        context_class=dict,
        cache_logger_on_first_use=True,
    )
