"""
Tests for "persuasion_iv.loaders".
"""

import textwrap
from pathlib import Path
from typing import List, Optional

import pytest
from pytest import MonkeyPatch

from persuasion_iv.exceptions import (
    ConfigFileLoadError,
    ConfigFileNotFoundError,
    InvalidOptionsError,
    UnknownFormatError,
)
from persuasion_iv.loaders import (
    DefaultsLoader,
    DictLoader,
    EnvLoader,
    FileLoader,
    TomlFormat,
    clean_settings,
)
from persuasion_iv.settings import FalsifySettings, options_for
from persuasion_iv.types import LoadedSettings, LoaderMeta


OPTIONS = options_for(FalsifySettings)


class TestCleanSettings:
    """Tests for clean_settings."""

    def test_convert_dashes(self) -> None:
        """
        Dashes in option names are replaced with underscores.
        """
        result = clean_settings({"instrument-pair": "1,2", "M": 10}, OPTIONS, "test")
        assert result == {"instrument_pair": "1,2", "M": 10}

    def test_invalid_settings(self) -> None:
        """
        All unknown options are listed in one error.
        """
        with pytest.raises(InvalidOptionsError) as exc_info:
            clean_settings({"spam": 1, "alpha": 0.1, "eggs": 2}, OPTIONS, "test")
        assert str(exc_info.value) == "Invalid options found in test: eggs, spam"

    def test_dict_values_are_kept(self) -> None:
        """
        Dict-valued options are not treated as nested sections.
        """
        settings = {"bins": {"age": "18:30,30:65"}}
        assert clean_settings(settings, OPTIONS, "test") == settings


class TestTomlFormat:
    """Tests for TomlFormat."""

    def test_load_section(self, tmp_path: Path) -> None:
        """
        Settings are read from the dotted section.
        """
        config_file = tmp_path.joinpath("persuasion.toml")
        config_file.write_text(
            textwrap.dedent(
                """\
                [persuasion.falsify]
                M = 50
                restrictions = "IA_IV_only"
                [persuasion.falsify.bins]
                age = "18:30,30:65"
                [persuasion.estimate]
                alpha = 0.1
                """
            )
        )
        result = TomlFormat("persuasion.falsify")(config_file, FalsifySettings, OPTIONS)
        assert result == {
            "M": 50,
            "restrictions": "IA_IV_only",
            "bins": {"age": "18:30,30:65"},
        }

    @pytest.mark.parametrize("section", ["persuasion.oracle", "spam"])
    def test_section_not_found(self, section: str, tmp_path: Path) -> None:
        """
        An empty dict is returned when the section does not exist.
        """
        config_file = tmp_path.joinpath("persuasion.toml")
        config_file.write_text("[persuasion.falsify]\nM = 50\n")
        assert TomlFormat(section)(config_file, FalsifySettings, OPTIONS) == {}

    def test_file_not_found(self) -> None:
        """
        "ConfigFileNotFoundError" is raised when a file does not exist.
        """
        with pytest.raises(ConfigFileNotFoundError):
            TomlFormat(None)(Path("x"), FalsifySettings, OPTIONS)

    def test_file_invalid(self, tmp_path: Path) -> None:
        """
        "ConfigFileLoadError" is raised when a file contains invalid TOML.
        """
        config_file = tmp_path.joinpath("persuasion.toml")
        config_file.write_text("spam")
        with pytest.raises(ConfigFileLoadError):
            TomlFormat(None)(config_file, FalsifySettings, OPTIONS)


class TestFileLoader:
    """Tests for FileLoader."""

    @pytest.fixture
    def fnames(self, tmp_path: Path) -> List[Path]:
        p0 = tmp_path.joinpath("0.toml")
        p1 = tmp_path.joinpath("1.toml")
        p2 = tmp_path.joinpath("2")
        p3 = tmp_path.joinpath("3")
        p0.touch()
        p2.touch()
        return [p0, p1, p2, p3]

    @pytest.mark.parametrize(
        "cfn, env, expected",
        [
            ([], None, []),
            ([0], None, [0]),
            ([1], None, []),
            ([], [0], [0]),
            ([0, 1], [2, 3], [0, 2]),
            ([2, 1, 0], [2], [2, 0, 2]),
        ],
    )
    def test_get_config_filenames(
        self,
        cfn: List[int],
        env: Optional[List[int]],
        expected: List[int],
        fnames: List[Path],
        monkeypatch: MonkeyPatch,
    ) -> None:
        """
        Config files can be given explicitly or via an env var.  Missing
        optional files are skipped.
        """
        var: Optional[str] = None
        if env is not None:
            monkeypatch.setenv("CF", ":".join(str(fnames[i]) for i in env))
            var = "CF"
        paths = FileLoader._get_config_filenames([fnames[i] for i in cfn], var)
        assert paths == [fnames[i] for i in expected]

    def test_empty_names_are_ignored(
        self, fnames: List[Path], monkeypatch: MonkeyPatch
    ) -> None:
        """
        Empty filenames from the env var are ignored.
        """
        monkeypatch.setenv("CF", f"::{fnames[0]}:")
        assert FileLoader._get_config_filenames([], "CF") == fnames[:1]

    @pytest.mark.parametrize("in_env", [True, False])
    def test_mandatory_file_missing(
        self, in_env: bool, tmp_path: Path, monkeypatch: MonkeyPatch
    ) -> None:
        """
        Paths prefixed with "!" must exist.
        """
        name = f"!{tmp_path.joinpath('missing.toml')}"
        files = []
        if in_env:
            monkeypatch.setenv("CF", name)
        else:
            files = [name]
        loader = FileLoader({"*.toml": TomlFormat(None)}, files, "CF")
        with pytest.raises(ConfigFileNotFoundError):
            loader(FalsifySettings, OPTIONS)

    def test_unknown_format(self, tmp_path: Path) -> None:
        """
        An error is raised if no format matches a file.
        """
        path = tmp_path.joinpath("settings.ini")
        path.touch()
        loader = FileLoader({"*.toml": TomlFormat(None)}, [path])
        with pytest.raises(UnknownFormatError):
            loader(FalsifySettings, OPTIONS)

    def test_load(self, tmp_path: Path) -> None:
        """
        Each file is loaded separately and remembers its directory.
        """
        cf1 = tmp_path.joinpath("s1.toml")
        cf1.write_text("[p]\nseed = 1\nM = 10\n")
        cf2 = tmp_path.joinpath("s2.toml")
        cf2.write_text("[p]\nM = 20\n")
        loader = FileLoader({"*.toml": TomlFormat("p")}, [cf1, cf2])
        assert loader(FalsifySettings, OPTIONS) == [
            LoadedSettings(
                {"seed": 1, "M": 10},
                LoaderMeta(f"FileLoader[{cf1}]", base_dir=cf1.parent),
            ),
            LoadedSettings(
                {"M": 20}, LoaderMeta(f"FileLoader[{cf2}]", base_dir=cf2.parent)
            ),
        ]

    def test_unknown_option_names_file(self, tmp_path: Path) -> None:
        """
        Unknown options in a file name the file.
        """
        path = tmp_path.joinpath("s.toml")
        path.write_text("[p]\nseeds = 1\n")
        loader = FileLoader({"*.toml": TomlFormat("p")}, [path])
        with pytest.raises(InvalidOptionsError, match="s.toml: seeds"):
            loader(FalsifySettings, OPTIONS)


class TestEnvLoader:
    """Tests for EnvLoader."""

    def test_from_env(self, monkeypatch: MonkeyPatch) -> None:
        """
        Options are read from prefixed, upper-case variables.
        """
        monkeypatch.setenv("PERSUASION_THREADS", "4")
        monkeypatch.setenv("PERSUASION_ALPHA", "0.1")
        monkeypatch.setenv("PERSUASION_SPAM", "1")
        loader = EnvLoader("PERSUASION_")
        result = loader(FalsifySettings, OPTIONS)
        assert result.settings == {"threads": "4", "alpha": "0.1"}
        assert result.meta.name == "EnvLoader"

    def test_option_names(self) -> None:
        """
        Option "M" maps to "PERSUASION_M".
        """
        m = next(o for o in OPTIONS if o.path == "M")
        assert EnvLoader("PERSUASION_").get_envvar(m) == "PERSUASION_M"


class TestDefaultsAndDictLoader:
    """Tests for DefaultsLoader and DictLoader."""

    def test_defaults(self) -> None:
        """
        Only options with a default are returned.
        """
        result = DefaultsLoader()(FalsifySettings, OPTIONS)
        assert "input" not in result.settings
        assert result.settings["M"] == 200
        assert result.settings["bins"] == {}

    def test_dict(self) -> None:
        """
        Dict values are cleaned like file values.
        """
        result = DictLoader({"instrument-pair": "1,2"}, "command line")(
            FalsifySettings, OPTIONS
        )
        assert result.settings == {"instrument_pair": "1,2"}
        assert result.meta.name == "command line"
