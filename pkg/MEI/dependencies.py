from functools import lru_cache

from MEI import config


@lru_cache
def get_debug_settings() -> config.DebugSettings:
    """
    Return the cached debug settings. The settings object is created once and
    reused for the lifetime of the process.
    """
    return config.DebugSettings()


@lru_cache
def get_solver_config() -> config.SolverConfig:
    """
    Return the cached solver configuration shared by the game kit, the planner
    and the energy management layers.
    """
    return config.SolverConfig()


@lru_cache
def get_archive_config() -> config.ArchiveConfig:
    """
    Return the cached run-archive configuration.
    """
    return config.ArchiveConfig()
