"""
Tests for "persuasion_iv.dict_utils".
"""

from typing import Any, Dict

import pytest

from persuasion_iv import dict_utils
from persuasion_iv.types import LoadedSettings, LoadedValue, LoaderMeta, OptionInfo


@pytest.mark.parametrize(
    "path, expected",
    [
        ("a", 1),
        ("b.x", 2),
        ("b.y.z", 3),
    ],
)
def test_get_path(path: str, expected: Any) -> None:
    """
    Nested values are looked up by their dotted path.
    """
    dct = {"a": 1, "b": {"x": 2, "y": {"z": 3}}}
    assert dict_utils.get_path(dct, path) == expected


def test_get_path_missing() -> None:
    """
    A missing key raises a KeyError.
    """
    with pytest.raises(KeyError):
        dict_utils.get_path({"a": {"b": 1}}, "a.c")


def test_set_path() -> None:
    """
    Missing intermediate dicts are created.
    """
    dct: Dict[str, Any] = {"a": 1}
    dict_utils.set_path(dct, "b.c", 2)
    dict_utils.set_path(dct, "b.d", 3)
    dict_utils.set_path(dct, "a", 4)
    assert dct == {"a": 4, "b": {"c": 2, "d": 3}}


class TestMergeSettings:
    """Tests for merge_settings()."""

    def test_later_loaders_win(self) -> None:
        """
        The value of the last loader that sets an option is kept, together
        with that loader's meta data.
        """
        options = tuple(
            OptionInfo(path, float, None, False) for path in ("alpha", "seed", "n")
        )
        defaults = LoaderMeta("defaults")
        env = LoaderMeta("env")
        cli = LoaderMeta("command line")
        loaded = [
            LoadedSettings({"alpha": 0.05, "seed": 0}, defaults),
            LoadedSettings({"alpha": "0.1"}, env),
            LoadedSettings({"seed": 3}, cli),
        ]
        result = dict_utils.merge_settings(options, loaded)
        assert result == {
            "alpha": LoadedValue("0.1", env),
            "seed": LoadedValue(3, cli),
        }

    def test_unknown_keys_are_ignored(self) -> None:
        """
        Only declared options are merged.
        """
        options = (OptionInfo("alpha", float, 0.05, True),)
        meta = LoaderMeta("dict")
        loaded = [LoadedSettings({"alpha": 0.1, "beta": 2}, meta)]
        assert dict_utils.merge_settings(options, loaded) == {
            "alpha": LoadedValue(0.1, meta)
        }
