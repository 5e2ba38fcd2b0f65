import logging
import traceback
import uuid
from pathlib import Path
from typing import Optional

from pydantic import ValidationError

from MEI import config, dependencies, exceptions

EXIT_SUCCESS = 0
EXIT_VALIDATION = 1
EXIT_INFEASIBLE = 2

logger = logging.getLogger("mei")


def exit_code_for(exc: BaseException) -> int:
    """
    Map an exception to the CLI exit code: 2 for infeasibility, 1 for everything else.
    """
    if isinstance(exc, exceptions.InfeasibilityError):
        return EXIT_INFEASIBLE
    return EXIT_VALIDATION


def handle_exception(exc: BaseException, settings: Optional[config.DebugSettings] = None) -> int:
    """
    Log a short error message with a unique exception id, write the full traceback to the
    tracebacks folder when DEBUG is enabled, and return the exit code for the exception.
    """
    settings = settings or dependencies.get_debug_settings()
    exc_id = str(uuid.uuid4())

    if isinstance(exc, ValidationError):
        logger.error(f"ValidationError [{exc_id}]: {exc.errors()}")
    elif isinstance(exc, exceptions.ScenarioValidationError):
        logger.error(f"Validation error [{exc_id}]: {exc}")
    elif isinstance(exc, exceptions.InfeasibilityError):
        logger.error(f"Infeasible problem [{exc_id}]: {exc}")
    elif isinstance(exc, OSError):
        logger.error(f"I/O error [{exc_id}]: {exc}")
    else:
        logger.error(f"Unhandled exception [{exc_id}]: {exc}")

    if settings.DEBUG:
        traceback_directory = Path(settings.LOG_DIRECTORY) / "tracebacks"
        try:
            traceback_directory.mkdir(parents=True, exist_ok=True)
            log_traceback_to_file(exc, exc_id, traceback_directory / f"traceback_{exc_id}.log")
            manage_traceback_files(traceback_directory, settings)
        except OSError as write_error:
            logger.warning(f"Could not write traceback file for [{exc_id}]: {write_error}")

    return exit_code_for(exc)


def log_traceback_to_file(exc: BaseException, exc_id: str, log_file_path: Path) -> None:
    """
    Write the full traceback of an exception to its own file, headed by the exception id.
    """
    with open(log_file_path, "w") as f:
        f.write(f"Exception ID: {exc_id}\n")
        f.write("".join(traceback.format_exception(type(exc), exc, exc.__traceback__)))
        f.write("\n")


def manage_traceback_files(traceback_dir: Path, settings: config.DebugSettings) -> None:
    """
    Ensures the number of traceback files in the directory does not exceed the limit.
    Deletes the oldest files if the limit is exceeded.
    """
    files = list(traceback_dir.glob("traceback_*.log"))
    files.sort(key=lambda f: f.stat().st_mtime)

    if len(files) > settings.MAX_TRACEBACK_FILES:
        for file_to_delete in files[:len(files) - settings.MAX_TRACEBACK_FILES]:
            try:
                file_to_delete.unlink()
            except OSError as e:
                logger.error(f"Error deleting old traceback file {file_to_delete}: {e}")
