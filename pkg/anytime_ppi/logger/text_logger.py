import logging
import os
import sys
import time
from typing import Union


def get_logger(logger_name: str, log_level: Union[str, None] = None) -> logging.Logger:
    AutoLoggerConfig.get_instance()
    logger: logging.Logger = logging.getLogger(logger_name)
    if log_level is not None:
        logger.setLevel(log_level)
    return logger


class AutoLoggerConfig:
    """
    A Class for the Automated Logging Config
    """

    FILE_LOGGING_LEVEL = os.environ.get("LOG_LEVEL", "DEBUG").upper()
    CONSOLE_LOGGING_LEVEL = os.environ.get("CONSOLE_LOG_LEVEL", "INFO").upper()
    LOG_DIR_VARIABLE = "ANYTIME_PPI_LOG_DIR"

    filename: Union[str, None]

    def __init__(self):
        self.filename = None

    def _setup_default_logging(self, log_level: str = None) -> None:
        """
        Setup default logging configuration. A log file is written only when
        ANYTIME_PPI_LOG_DIR is set; the file name carries the parent PID so that
        replication workers of one run can be told apart.
        :param log_level: The default log level to use. If None, uses LOG_LEVEL and CONSOLE_LOG_LEVEL environment vars.
        :return: None
        """
        log_dir = os.environ.get(self.LOG_DIR_VARIABLE)
        filename = None
        if log_dir:
            timestamp = time.strftime("%Y_%m_%d_%H_%M_%S", time.localtime())
            filename = os.path.join(
                os.path.expanduser(log_dir),
                f"anytime_ppi_{os.getppid()}_{timestamp}.log",
            )
        self._setup_logging(filename=filename, filemode="w", log_level=log_level)

    def _setup_logging(
        self,
        filename: Union[str, None],
        filemode: str = "a",
        log_level: str = None,
    ) -> None:
        """
        Sets the logging configuration, console on stderr plus an optional file
        :param filename: Output log file, None for console only
        :param filemode: Open mode for file
        :param log_level: The default log level to use. If None, uses LOG_LEVEL and CONSOLE_LOG_LEVEL environment vars.
        :return:
        """
        file_logging_level = log_level or self.FILE_LOGGING_LEVEL
        console_logging_level = log_level or self.CONSOLE_LOGGING_LEVEL
        fmt = logging.Formatter(
            "%(asctime)s %(levelname)s - %(name)s - %(message)s",
            datefmt="[%Y-%m-%d %H:%M:%S]",
        )

        root = logging.getLogger("")
        del root.handlers[:]
        root.setLevel(logging.DEBUG)

        warning = None
        if filename is not None:
            try:
                os.makedirs(os.path.dirname(filename), exist_ok=True)
                file_handler = logging.FileHandler(filename, mode=filemode, encoding="utf-8")
                file_handler.setLevel(file_logging_level)
                file_handler.setFormatter(fmt)
                root.addHandler(file_handler)
            except OSError as e:
                warning = f"Cannot write log file {filename} ({e}), logging to console only"
                filename = None

        # stdout carries the CSV output, logs go to stderr
        console_handler = logging.StreamHandler(stream=sys.stderr)
        console_handler.setLevel(console_logging_level)
        console_handler.setFormatter(fmt)
        root.addHandler(console_handler)

        self.filename = filename
        if warning is not None:
            logging.getLogger(__name__).warning(warning)

    @classmethod
    def get_instance(cls):
        global _auto_logger_config
        if _auto_logger_config is None:
            _auto_logger_config = cls()
            _auto_logger_config._setup_default_logging()

        return _auto_logger_config

    @classmethod
    def get_log_file_path(cls) -> Union[str, None]:
        """
        Return the current log file used to store log messages
        :return: Full path to log file, None when logging to console only
        """
        self = cls.get_instance()
        return self.filename

    @classmethod
    def set_console_level(cls, log_level: str) -> None:
        cls.get_instance()
        for handler in logging.getLogger("").handlers:
            if not isinstance(handler, logging.FileHandler):
                handler.setLevel(log_level.upper())


_auto_logger_config = None


def mute_current_process():
    """Mute warnings and all logs except ERRORS. This is meant for replication worker processes."""
    import warnings

    warnings.filterwarnings("ignore")

    process_loggers = [
        logging.getLogger(name) for name in logging.root.manager.loggerDict
    ]
    for logger in process_loggers:
        logger.setLevel(logging.ERROR)
