import os
import json
import math
from typing import (
    Any, Mapping,
    Callable, TypeVar
)

from . import errors

__all__ = (
    "reify",
    "round_half_up",
    "check_file",
    "ensure_directory",
    "dump_json",
    "append_jsonl"
)

_T = TypeVar("_T")

class reify:
    """
    Compute a derived view once per instance and keep it, e.g. the flat list of
    a model's prunable matrices, which thresholds, masks and checkpoints all
    index by position. The value is stored under the method's name in the
    instance `__dict__`, so it is fixed at first access.
    """

    def __init__(self, func: Callable[[Any], _T]) -> None:
        self.func = func
        self.__doc__ = func.__doc__
        self.name = func.__name__

    def __get__(self, instance: Any, owner: type[Any] | None = None) -> Any:
        if instance is None:
            return self
        if self.name in instance.__dict__:
            return instance.__dict__[self.name]
        value = self.func(instance)
        instance.__dict__[self.name] = value
        return value

def round_half_up(value: float) -> int:
    """Round to the nearest integer with halves going up (`round(2.5) == 3`)."""
    return int(math.floor(value + 0.5))

def check_file(path: str) -> bool:
    """
    Check if a file exists and is writable, or if it can be created.

    Args:
        path (str): The path to the file to check.

    Returns:
        bool: True if the file exists and is writable, False if it doesn't exist yet.

    Raises:
        NotWritableError: If the file exists but is not writable.
        NotFileError: If the path exists but is not a file.
        NotDirectoryError: If the parent path exists but is not a directory.
    """
    path = os.path.abspath(path)

    if os.path.exists(path):
        if not os.path.isfile(path):
            raise errors.NotFileError(f"path '{path}' is not a file")
        if not os.access(path, os.W_OK):
            raise errors.NotWritableError(f"path '{path}' is not writable")
        return True

    parent = os.path.dirname(path)
    if os.path.exists(parent) and not os.path.isdir(parent):
        raise errors.NotDirectoryError(f"path '{parent}' is not a directory")
    return False

def ensure_directory(path: str) -> str:
    """
    Create `path` (and parents) if needed and return its absolute form.

    Raises:
        NotDirectoryError: If `path` exists and is not a directory.
        NotWritableError: If the directory cannot be written to.
    """
    path = os.path.abspath(path)
    if os.path.exists(path) and not os.path.isdir(path):
        raise errors.NotDirectoryError(f"path '{path}' is not a directory")
    os.makedirs(path, exist_ok=True)
    if not os.access(path, os.W_OK):
        raise errors.NotWritableError(f"path '{path}' is not writable")
    return path

def dump_json(
    file: str,
    data: Any,
    encoding: str = "utf-8",
    indent: int = 2,
    dump_kwargs: Mapping[str, Any] = {}
) -> None:
    """
    Dump JSON data into a file.

    Args:
        file (str): Path to the file where JSON data will be written.
        data (Any): JSON-serializable data to be dumped.
        encoding (str, optional): Encoding of the file. Defaults to "utf-8".
        indent (int, optional): Number of spaces to use as indentation. Defaults to 2.
        dump_kwargs (Mapping[str, Any], optional): Additional keyword arguments for json.dump(). Defaults to {}.
    """
    with open(file, "w", encoding=encoding) as f:
        json.dump(data, f, indent=indent, **dump_kwargs)
        f.write("\n")

def append_jsonl(file: str, record: Mapping[str, Any], encoding: str = "utf-8") -> None:
    """Append one record as a single JSON line, keeping the record's key order."""
    with open(file, "a", encoding=encoding) as f:
        f.write(json.dumps(record) + "\n")
