"""
Global constants shared by different modules.
"""

from typing import Final


#: Name of the application (logger name, TOML table, metadata key)
APP_NAME: Final[str] = "persuasion-iv"

#: Top-level TOML table holding per-command settings
CONFIG_SECTION: Final[str] = "persuasion"

#: Prefix for environment variables
ENV_PREFIX: Final[str] = "PERSUASION_"

#: Env var listing additional config files (``:``-separated, ``!`` = mandatory)
SETTINGS_FILES_VAR: Final[str] = "PERSUASION_SETTINGS"

#: Env var with the default worker count for concurrent subsampling
THREADS_VAR: Final[str] = "PERSUASION_THREADS"

#: Default config file searched for in the cwd and its parents
CONFIG_FILE: Final[str] = "persuasion.toml"

#: Key used in attrs field metadata
METADATA_KEY: Final[str] = APP_NAME

#: |denominator| below this raises a weak-first-stage / zero-mass error
DENOMINATOR_GUARD: Final[float] = 1e-8

#: E[Y|Z=0] above ``1 - DK_GUARD`` leaves the approximated rate undefined
DK_GUARD: Final[float] = 1e-12
