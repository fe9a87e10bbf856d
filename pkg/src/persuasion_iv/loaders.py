"""
Settings loaders and the protocols they implement.

Loaders are called in order of increasing precedence by
:func:`persuasion_iv.settings.load_settings`.
"""

import logging
import os
from fnmatch import fnmatch
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Protocol, Union, cast

from ._compat import tomllib
from .constants import APP_NAME
from .dict_utils import set_path
from .exceptions import (
    ConfigFileLoadError,
    ConfigFileNotFoundError,
    InvalidOptionsError,
    UnknownFormatError,
)
from .types import LoadedSettings, LoaderMeta, OptionInfo, OptionList, SettingsDict


__all__ = [
    "Loader",
    "FileFormat",
    "DefaultsLoader",
    "DictLoader",
    "EnvLoader",
    "FileLoader",
    "TomlFormat",
    "clean_settings",
]


LOGGER = logging.getLogger(APP_NAME)


class Loader(Protocol):
    """
    **Protocol** that settings loaders must implement.
    """

    def __call__(
        self, settings_cls: type, options: OptionList
    ) -> Union[LoadedSettings, Iterable[LoadedSettings]]:
        """
        Load settings for the given options.

        Args:
            settings_cls: The settings class.
            options: The list of available options.

        Return:
            The loaded settings (one or more sets).
        """
        ...


class FileFormat(Protocol):
    """
    **Protocol** that file format loaders for :class:`FileLoader` must
    implement.
    """

    def __call__(
        self, path: Path, settings_cls: type, options: OptionList
    ) -> SettingsDict:
        """
        Load settings from a given file and return them as a dict.

        Raise:
            ConfigFileNotFoundError: If *path* does not exist.
            ConfigFileLoadError: If *path* cannot be read/loaded/decoded.
        """
        ...


class DefaultsLoader:
    """
    Return the default values of a settings class.
    """

    def __call__(self, settings_cls: type, options: OptionList) -> LoadedSettings:
        settings: SettingsDict = {}
        for opt in options:
            if opt.has_default:
                set_path(settings, opt.path, opt.default)
        return LoadedSettings(settings, LoaderMeta("defaults"))


class DictLoader:
    """
    Load settings from a dict of values (e.g., command line options).

    Args:
        settings: A (nested) dict of settings
        name: Name shown in error messages.
    """

    def __init__(self, settings: SettingsDict, name: str = "dict") -> None:
        self.settings = settings
        self.name = name

    def __call__(self, settings_cls: type, options: OptionList) -> LoadedSettings:
        settings = clean_settings(self.settings, options, self.name)
        return LoadedSettings(settings, LoaderMeta(self.name))


class EnvLoader:
    """
    Load settings from environment variables.

    Args:
        prefix: Prefix for environment variables, e.g., ``PERSUASION_``.
    """

    def __init__(self, prefix: str) -> None:
        self.prefix = prefix

    def __call__(self, settings_cls: type, options: OptionList) -> LoadedSettings:
        LOGGER.debug(f"Looking for env vars with prefix: {self.prefix}")

        env = os.environ
        values: SettingsDict = {}
        for o in options:
            varname = self.get_envvar(o)
            if varname in env:
                LOGGER.debug(f"Env var found: {varname}")
                set_path(values, o.path, env[varname])

        return LoadedSettings(values, LoaderMeta(self))

    def get_envvar(self, option: OptionInfo) -> str:
        """
        Return the env var name for the given option.
        """
        return f"{self.prefix}{option.path.upper().replace('.', '_')}"


class FileLoader:
    """
    Load settings from config files.

    Settings of multiple files are merged and the last file wins.  Files named in
    the environment variable *env_var* (``:``-separated) are loaded after
    *files*.

    Mandatory files are prefixed with ``!``.  Optional files are ignored if
    they don't exist.

    Args:
        formats: A dict mapping glob patterns to :class:`FileFormat` instances.
        files: A list of filenames to try to load.
        env_var: Name of the environment variable that may hold additional file
            paths.
    """

    def __init__(
        self,
        formats: Dict[str, FileFormat],
        files: Iterable[Union[str, Path]],
        env_var: Optional[str] = None,
    ) -> None:
        self.files = files
        self.env_var = env_var
        self.formats = formats

    def __call__(self, settings_cls: type, options: OptionList) -> List[LoadedSettings]:
        """
        Load settings for the given options.

        Raise:
            UnknownFormatError: When no :class:`FileFormat` matches a file.
            ConfigFileNotFoundError: If a mandatory file does not exist.
            ConfigFileLoadError: If a file cannot be read/loaded/decoded.
            InvalidOptionsError: If a file contains unknown options.
        """
        paths = self._get_config_filenames(self.files, self.env_var)
        loaded_settings: List[LoadedSettings] = []
        for path in paths:
            settings = self._load_file(path, settings_cls, options)
            meta = LoaderMeta(f"{type(self).__name__}[{path}]", base_dir=path.parent)
            loaded_settings.append(LoadedSettings(settings, meta))
        return loaded_settings

    def _load_file(
        self, path: Path, settings_cls: type, options: OptionList
    ) -> SettingsDict:
        for pattern, ffloader in self.formats.items():
            if fnmatch(path.name, pattern):
                settings = ffloader(path, settings_cls, options)
                return clean_settings(settings, options, path)

        raise UnknownFormatError(f"No loader configured for: {path}")

    @staticmethod
    def _get_config_filenames(
        files: Iterable[Union[str, Path]], env_var: Optional[str]
    ) -> List[Path]:
        candidates = [(False, str(f)) for f in files]
        if env_var:
            candidates += [(True, fname) for fname in os.getenv(env_var, "").split(":")]

        paths = []
        for from_envvar, fname in candidates:
            _, flag, fname = fname.rpartition("!")
            if not fname:
                continue
            is_mandatory = flag == "!"
            try:
                path = Path(fname).resolve(strict=True)
            except FileNotFoundError as e:
                if is_mandatory:
                    LOGGER.error(f"Mandatory config file not found: {fname}")
                    raise ConfigFileNotFoundError(str(e)) from e
                if from_envvar:
                    LOGGER.warning(f"Config file from {env_var} not found: {fname}")
                else:
                    LOGGER.info(f"Config file not found: {fname}")
            else:
                LOGGER.debug(f"Loading settings from: {path}")
                paths.append(path)

        return paths


class TomlFormat:
    """
    Support for TOML files.  Read settings from the given *section*.

    Args:
        section: Dotted name of the table to load settings from, e.g.
            ``persuasion.falsify``.  ``None`` loads the top level.
    """

    def __init__(self, section: Optional[str]) -> None:
        self.section = section

    def __call__(
        self, path: Path, settings_cls: type, options: OptionList
    ) -> SettingsDict:
        try:
            with path.open("rb") as f:
                settings: Any = tomllib.load(f)
        except FileNotFoundError as e:
            raise ConfigFileNotFoundError(str(e)) from e
        except (PermissionError, tomllib.TOMLDecodeError) as e:
            raise ConfigFileLoadError(f"{path}: {e}") from e
        if self.section is not None:
            for s in self.section.split("."):
                try:
                    settings = settings[s]
                except KeyError:
                    return {}
        return cast(SettingsDict, settings)


def clean_settings(
    settings: SettingsDict, options: OptionList, source: Any
) -> SettingsDict:
    """
    Normalize ``-`` to ``_`` in option names and check for unknown options.

    An error is raised only after all options have been checked.  It then lists
    every invalid option that was found.

    Args:
        settings: The settings to be cleaned.
        options: The list of available options.
        source: Source of the settings (e.g., path to a config file).

    Return:
        The cleaned settings.

    Raise:
        InvalidOptionsError: If invalid settings have been found.
    """
    invalid_paths = []
    valid_paths = {o.path for o in options}
    cleaned: SettingsDict = {}

    def _iter_dict(d: SettingsDict, prefix: str) -> None:
        for key, val in d.items():
            key = key.replace("-", "_")
            path = f"{prefix}{key}"

            if path in valid_paths:
                set_path(cleaned, path, val)
                continue

            if isinstance(val, dict):
                _iter_dict(val, f"{path}.")
            else:
                invalid_paths.append(path)

    _iter_dict(settings, "")

    if invalid_paths:
        joined_paths = ", ".join(sorted(invalid_paths))
        raise InvalidOptionsError(f"Invalid options found in {source}: {joined_paths}")

    return cleaned
