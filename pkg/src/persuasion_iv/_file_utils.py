from pathlib import Path
from typing import Iterable, Optional, Union


ROOT_DIR = Path().resolve().root


def find(
    filename: str,
    stop_dir: Union[str, Path] = ROOT_DIR,
    stop_files: Iterable[str] = (".git", ".hg"),
    *,
    start_dir: Optional[Path] = None,
) -> Optional[Path]:
    """
    Search for a config file in *start_dir* and its parents.

    The search ends at *stop_dir* or in the first directory that contains one of
    the *stop_files* (e.g., the root of the current project).

    Args:
        filename: The name of the file to find, e.g. ``persuasion.toml``.
        stop_dir: Stop searching if the current search dir equals this one.
        stop_files: Stop searching if the current search dir contains this file.
        start_dir: Start directory for the search, defaults to the cwd.

    Returns:
        The path to *filename* if found, else ``None``.
    """
    if start_dir is None:
        start_dir = Path.cwd()
    start_dir = start_dir.resolve()
    for path in (start_dir, *start_dir.parents):
        p = path.joinpath(filename)
        if p.is_file():
            return p

        if path == Path(stop_dir):
            return None

        if any(path.joinpath(stop_file).exists() for stop_file in stop_files):
            return None

    return None
