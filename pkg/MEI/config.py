from pathlib import Path
from typing import Literal

from pydantic_settings import BaseSettings, SettingsConfigDict

CONFIG_DIRECTORY = Path(__file__).parent.parent / "config"


class DebugSettings(BaseSettings):
    DEBUG: bool = False
    LOG_LEVEL: Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"] = "INFO"
    MAX_TRACEBACK_FILES: int = 100
    LOG_DIRECTORY: Path = Path("logs")

    model_config = SettingsConfigDict(env_file=CONFIG_DIRECTORY / "debug.env")


class SolverConfig(BaseSettings):
    # Line searches and best-response sweeps
    GOLDEN_TOLERANCE: float = 1e-8
    MAX_SWEEPS: int = 50
    NASH_TOLERANCE: float = 1e-6
    NASH_MAX_ITERATIONS: int = 200
    FICTITIOUS_PLAY_ITERATIONS: int = 100_000

    # Planning
    PENALTY_COEFFICIENT: float = 1e6
    FEASIBILITY_TOLERANCE: float = 1e-6
    NORMALIZATION_SAMPLES: int = 101

    # Dispatch
    BALANCE_TOLERANCE: float = 1e-9
    EXCHANGE_QUANTUM: float = 1e-6
    DISPATCH_LINE_TOLERANCE: float = 1e-3
    SHORTFALL_PENALTY: float = 1e6

    # Component layer
    RICCATI_TOLERANCE: float = 1e-10

    model_config = SettingsConfigDict(
        env_file=CONFIG_DIRECTORY / "solver.env",
        env_file_encoding="utf-8",
    )


class ArchiveConfig(BaseSettings):
    DATABASE_URL: str = f"sqlite:///{(Path(__file__).parent.parent / 'data' / 'runs.db').resolve()}"
    ECHO: bool = False

    model_config = SettingsConfigDict(
        env_file=CONFIG_DIRECTORY / "archive.env",
        env_file_encoding="utf-8",
    )
