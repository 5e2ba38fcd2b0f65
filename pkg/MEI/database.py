# database.py

"""
This module provides the run archive: engine creation, table creation, sessions and storing the
summary of a finished dispatch run.
"""
import logging
from typing import Iterator, Optional, Type

from sqlalchemy import inspect
from sqlalchemy.engine import Engine
from sqlmodel import Session, SQLModel, create_engine

from MEI import dependencies, models, reports

logger = logging.getLogger("mei")


def get_engine(database_url: Optional[str] = None) -> Engine:
    try:
        archive_config = dependencies.get_archive_config()
        return create_engine(database_url or archive_config.DATABASE_URL, echo=archive_config.ECHO)
    except Exception as unexpected_error:
        raise ConnectionError(
            f"Unexpected error when creating engine: {unexpected_error}"
        ) from unexpected_error


def create_tables(engine: Optional[Engine] = None) -> Engine:
    """
    Create the archive tables and verify that they exist.

    Raises:
        RuntimeError: If any table fails to be created.
    """
    engine = engine or get_engine()
    model_registry = models.ModelRegistry()
    try:
        SQLModel.metadata.create_all(engine)
        for model_class in model_registry._registry.values():
            if not table_exists(engine, model_class):
                raise RuntimeError(f"Table '{model_class.__tablename__}' was not created.")
    except Exception as unexpected_error:
        raise RuntimeError(
            f"An error occurred during table creation: {unexpected_error}"
        ) from unexpected_error
    return engine


def table_exists(engine: Engine, model_class: Type[SQLModel]) -> bool:
    inspector = inspect(engine)
    return inspector.has_table(model_class.__tablename__)


def get_session(engine: Optional[Engine] = None) -> Iterator[Session]:
    engine = engine or get_engine()
    try:
        with Session(engine) as session:
            yield session
    except Exception as unexpected_error:
        raise RuntimeError(
            f"An unexpected error occurred while obtaining session: {unexpected_error}"
        ) from unexpected_error


def archive_report(report: reports.RunReport, engine: Optional[Engine] = None) -> int:
    """
    Store the summary of a run, one RunTotal row per energy column.

    Args:
        report (RunReport): The finished run.
        engine (Optional[Engine]): Archive engine, the configured one by default.

    Returns:
        int: The id of the stored run.
    """
    engine = create_tables(engine)
    record = models.RunRecord(
        scenario=report.scenario,
        mode=report.mode.value,
        steps=report.steps,
        time_step=report.time_step,
        cost=report.cost,
        max_residual=report.max_residual(),
        converged=report.converged,
    )
    with Session(engine) as session:
        session.add(record)
        session.flush()
        for series, energy in report.totals().items():
            session.add(models.RunTotal(run_id=record.run_id, series=series, energy=energy))
        session.commit()
        run_id = record.run_id
    logger.info(f"Archived run {run_id} of '{report.scenario}'")
    return run_id


if __name__ == "__main__":
    print("This is only a library. Nothing will happen when you execute it.")
