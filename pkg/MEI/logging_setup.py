# logging_setup.py

import logging
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional

from MEI import dependencies
from MEI import exceptions

LOGGER_NAME = "mei"
GENERAL_FORMAT = "%(asctime)s %(levelname)s [%(name)s] %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


def setup_logging(log_directory: Optional[Path] = None) -> None:
    """
    Setup logging for the toolkit.

    This function initializes log directories, configures the application and SQL loggers and
    their handlers, and reports setup problems as warnings without interrupting the run.

    Args:
        log_directory (Optional[Path]): Directory for app.log, sql.log and tracebacks/.
            Defaults to the LOG_DIRECTORY debug setting.
    """
    application_logger = logging.getLogger(LOGGER_NAME)
    settings = dependencies.get_debug_settings()
    log_directory = Path(log_directory or settings.LOG_DIRECTORY)
    traceback_directory = log_directory / "tracebacks"
    try:
        log_directory.mkdir(parents=True, exist_ok=True)
        traceback_directory.mkdir(parents=True, exist_ok=True)
        application_logger.debug(f"Log directories ensured at: {log_directory}, {traceback_directory}")
    except Exception as directory_creation_error:
        application_logger.warning(f"Failed to create log directories: {directory_creation_error}")

    general_formatter = logging.Formatter(GENERAL_FORMAT, datefmt=DATE_FORMAT)
    desired_log_level = resolve_log_level(settings.LOG_LEVEL)

    try:
        configure_application_logger(log_directory / "app.log", general_formatter, desired_log_level)
        application_logger.debug("Application logger configured successfully.")
    except exceptions.LoggingSetupError as application_error:
        application_logger.warning(f"Failed to setup application logger: {application_error}")

    try:
        configure_sqlalchemy_logger(log_directory / "sql.log", general_formatter, logging.WARNING)
        application_logger.debug("SQLAlchemy logger configured successfully.")
    except exceptions.LoggingSetupError as sqlalchemy_error:
        application_logger.warning(f"Failed to setup SQLAlchemy logger: {sqlalchemy_error}")

    application_logger.info("Logging setup complete.")


def resolve_log_level(level_name: str) -> int:
    """
    Map a level name such as "INFO" to its logging constant, falling back to INFO.
    """
    level = getattr(logging, level_name.upper(), None)
    if not isinstance(level, int):
        logging.getLogger(LOGGER_NAME).warning(f"Invalid LOG_LEVEL '{level_name}'. Defaulting to 'INFO'.")
        return logging.INFO
    return level


def configure_application_logger(
        application_log_file: Path,
        formatter: logging.Formatter,
        desired_log_level: int
) -> None:
    """
    Configure the application logger and attach the app.log file handler.

    Args:
        application_log_file (Path): Path to the app.log file.
        formatter (logging.Formatter): Formatter for the file handler.
        desired_log_level (int): Desired logging level.

    Raises:
        exceptions.LoggingSetupError: If setting log level or configuring handler fails.
    """
    application_logger = logging.getLogger(LOGGER_NAME)
    application_logger.setLevel(desired_log_level)

    try:
        for handler in application_logger.handlers[:]:
            if isinstance(handler, RotatingFileHandler) and Path(handler.baseFilename).name == "app.log":
                application_logger.removeHandler(handler)
                handler.close()

        application_file_handler = RotatingFileHandler(
            application_log_file, maxBytes=5 * 1024 * 1024, backupCount=5
        )
        application_file_handler.setFormatter(formatter)
        application_file_handler.setLevel(desired_log_level)
        application_logger.addHandler(application_file_handler)

        if application_file_handler not in application_logger.handlers:
            raise exceptions.LoggingSetupError("app.log file handler was not added to the application logger.")

    except Exception as handler_error:
        raise exceptions.LoggingSetupError(f"Error setting up app.log handler: {handler_error}")


def get_app_file_handler(logger: logging.Logger) -> RotatingFileHandler:
    """
    Retrieve the app.log file handler from the given logger.

    Raises:
        exceptions.LoggingSetupError: If the app.log handler is not found.
    """
    for handler in logger.handlers:
        if isinstance(handler, RotatingFileHandler):
            if Path(handler.baseFilename).name == 'app.log':
                return handler
    raise exceptions.LoggingSetupError("app.log file handler not found.")


def configure_sqlalchemy_logger(
        sqlalchemy_log_file: Path,
        formatter: logging.Formatter,
        desired_log_level: int
) -> None:
    """
    Configure the SQLAlchemy logger used by the run archive and attach the sql.log file handler.

    Raises:
        exceptions.LoggingSetupError: If setting log level or configuring handler fails.
    """
    sqlalchemy_logger = logging.getLogger("sqlalchemy.engine")
    sqlalchemy_logger.setLevel(desired_log_level)

    try:
        for handler in sqlalchemy_logger.handlers[:]:
            if isinstance(handler, RotatingFileHandler) and Path(handler.baseFilename).name == "sql.log":
                sqlalchemy_logger.removeHandler(handler)
                handler.close()

        sqlalchemy_file_handler = RotatingFileHandler(
            sqlalchemy_log_file, maxBytes=5 * 1024 * 1024, backupCount=5
        )
        sqlalchemy_file_handler.setFormatter(formatter)
        sqlalchemy_file_handler.setLevel(desired_log_level)
        sqlalchemy_logger.addHandler(sqlalchemy_file_handler)

        if sqlalchemy_file_handler not in sqlalchemy_logger.handlers:
            raise exceptions.LoggingSetupError("sql.log file handler was not added to sqlalchemy.engine logger.")

    except Exception as handler_error:
        raise exceptions.LoggingSetupError(f"Error setting up sql.log handler: {handler_error}")

    # Keep SQL statements off the console
    try:
        for handler in sqlalchemy_logger.handlers[:]:
            if type(handler) is logging.StreamHandler:
                sqlalchemy_logger.removeHandler(handler)
    except Exception as handler_removal_error:
        raise exceptions.LoggingSetupError(
            f"Error removing console handlers from sqlalchemy.engine logger: {handler_removal_error}")


def adjust_log_level(level_name: str) -> None:
    """
    Change the level of the application logger and its app.log handler at runtime,
    e.g. when the CLI is started with --verbose.
    """
    application_logger = logging.getLogger(LOGGER_NAME)
    desired_log_level = resolve_log_level(level_name)
    application_logger.setLevel(desired_log_level)
    try:
        get_app_file_handler(application_logger).setLevel(desired_log_level)
    except exceptions.LoggingSetupError as logging_setup_error:
        application_logger.warning(f"Logging setup error during log level adjustment: {logging_setup_error}")
    application_logger.debug(f"Application log level set to {logging.getLevelName(desired_log_level)}.")


if __name__ == "__main__":
    print("This is only a library. Nothing will happen when you execute it.")
