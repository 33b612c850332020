"""Python access to the travel-planning sandbox, verifier and trainer."""

from ._core import (
    ConfigError,
    World,
    cli,
    compute_advantages,
    keep_filter,
    population_std,
    sample_queries,
)

__all__ = [
    "ConfigError",
    "World",
    "cli",
    "compute_advantages",
    "keep_filter",
    "population_std",
    "sample_queries",
]
