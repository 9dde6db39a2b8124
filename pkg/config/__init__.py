"""Configuration package for the optomech toolkit.

Only constants are re-exported here; the loader and run registry import the
optomech package and are imported explicitly as config.loader and
config.run_registry.
"""

from .constants import (
    APP_NAME,
    APP_VERSION,
    CONFIG_DIR,
    PRESETS_DIR,
    SCHEMA_VERSION,
    TWO_PI,
)

__all__ = [
    "APP_NAME",
    "APP_VERSION",
    "CONFIG_DIR",
    "PRESETS_DIR",
    "SCHEMA_VERSION",
    "TWO_PI",
]
