"""Python interface to the stochunfold C++ core."""

from ._core import (
    ConfigError,
    Error,
    evolution_study,
    homogenize,
    identity_suite,
    korn,
    run,
    spring,
    static_study,
)

__all__ = [
    "ConfigError",
    "Error",
    "evolution_study",
    "homogenize",
    "identity_suite",
    "korn",
    "run",
    "spring",
    "static_study",
]
