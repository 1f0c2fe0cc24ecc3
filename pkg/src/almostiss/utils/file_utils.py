import csv
import json
import os
from pathlib import Path
from typing import Any, Iterable, Sequence, Union

from .extras import to_jsonable

__all__ = ["ensure_dir", "read_json", "write_json", "write_csv", "format_number"]

PathLike = Union[str, os.PathLike]


def ensure_dir(path: PathLike) -> Path:
    """Create a directory (and parents) if needed."""
    path = Path(path).expanduser()
    path.mkdir(parents=True, exist_ok=True)
    return path


def read_json(path: PathLike) -> Any:
    """Load a JSON file; OSError and JSONDecodeError propagate."""
    with open(Path(path).expanduser(), "r", encoding="utf-8") as f:
        return json.load(f)


def write_json(path: PathLike, data: Any) -> Path:
    """Write pretty JSON. Strings are written as-is so pre-serialised models keep their formatting."""
    path = Path(path).expanduser()
    ensure_dir(path.parent)
    text = data if isinstance(data, str) else json.dumps(to_jsonable(data), indent=2)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def format_number(value: Any) -> str:
    """repr() for floats so CSV values round-trip exactly."""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """Write a CSV file with a header row."""
    path = Path(path).expanduser()
    ensure_dir(path.parent)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_number(to_jsonable(v)) for v in row])
    return path
