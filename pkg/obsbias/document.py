"""JSON documents for configuration files, synth specs and result artifacts."""

import json
import math
from pathlib import Path
from typing import Any, Dict, Optional, Union

CANONICAL_DIGITS = 9


class JsonDocument:
    """A JSON object with dot-notation reads, deep merging and canonical output.

    ``get`` uses '.' as a path separator.

    Example:
        >>> doc = JsonDocument({'theme': {'width': 900}})
        >>> doc.get('theme.width')
        900
        >>> doc.merge({'theme': {'height': 400}})
        >>> doc.to_dict()
        {'theme': {'width': 900, 'height': 400}}
    """

    def __init__(self, data: Optional[Dict[str, Any]] = None):
        """Initialize the document.

        Args:
            data: Initial data dictionary. Defaults to empty dict.
        """
        self._data = data if data is not None else {}

    @classmethod
    def from_file(
        cls, file_path: Union[str, Path], max_size: Optional[int] = None
    ) -> "JsonDocument":
        """Load a JSON object from a file.

        Args:
            file_path: Path to JSON file
            max_size: Optional maximum file size in bytes.

        Returns:
            JsonDocument with the loaded data

        Raises:
            FileNotFoundError: If file doesn't exist
            ValueError: If the file exceeds max_size, or if the top-level
                        value is not an object
            json.JSONDecodeError: If file contains invalid JSON
        """
        path = Path(file_path)

        if not path.exists():
            raise FileNotFoundError(f"File not found: {file_path}")

        if max_size is not None:
            file_size = path.stat().st_size
            if file_size > max_size:
                raise ValueError(
                    f"File size ({file_size} bytes) exceeds maximum allowed size "
                    f"({max_size} bytes): {file_path}"
                )

        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)

        if not isinstance(data, dict):
            raise ValueError(
                f"Expected a JSON object at the top level of {file_path}, "
                f"got {type(data).__name__}"
            )
        return cls(data)

    def get(self, key: str, default: Any = None) -> Any:
        """Get a value using a dot-separated path.

        Raises:
            ValueError: If key is empty, whitespace-only, or has empty segments
        """
        self._validate_path(key)

        value = self._data
        for k in key.split("."):
            if isinstance(value, dict) and k in value:
                value = value[k]
            else:
                return default
        return value

    def merge(self, other: Union["JsonDocument", Dict[str, Any]]) -> None:
        """Deep merge another document or dictionary into this one."""
        other_data = other._data if isinstance(other, JsonDocument) else other
        self._data = self._deep_merge(self._data, other_data)

    def to_dict(self) -> Dict[str, Any]:
        """Export a deep copy of the data."""
        return self._deep_copy(self._data)

    def dumps(self, indent: int = 2) -> str:
        """Serialize the document canonically.

        Keys are sorted, floats rounded to 9 significant digits, non-finite
        floats written as null and the text ends with a newline, so equal
        inputs always give identical bytes.
        """
        return (
            json.dumps(
                canonicalize(self._data),
                indent=indent,
                sort_keys=True,
                ensure_ascii=False,
                allow_nan=False,
            )
            + "\n"
        )

    def save(self, file_path: Union[str, Path]) -> None:
        """Save the canonical text to a JSON file, creating parent directories."""
        path = Path(file_path)
        path.parent.mkdir(parents=True, exist_ok=True)

        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(self.dumps())

    def __getitem__(self, key: str) -> Any:
        return self._data[key]

    def __contains__(self, key: str) -> bool:
        return key in self._data

    @staticmethod
    def _validate_path(path: str) -> None:
        """Validate a dot-notation path string.

        Raises:
            ValueError: If path is empty, whitespace-only, or has empty segments
        """
        if not path or not path.strip():
            raise ValueError("Path cannot be empty or whitespace-only")

        if "." in path:
            for segment in path.split("."):
                if not segment or not segment.strip():
                    raise ValueError(
                        f"Path '{path}' contains empty segments. "
                        "Paths cannot have leading, trailing, or consecutive dots."
                    )

    @staticmethod
    def _deep_merge(
        base: Dict[str, Any],
        overlay: Dict[str, Any],
        seen: Optional[Dict[int, Any]] = None,
    ) -> Dict[str, Any]:
        """Deep merge two dictionaries with circular reference protection.

        Raises:
            ValueError: If a circular reference is detected
        """
        if seen is None:
            seen = {}

        base_id = id(base)
        if base_id in seen:
            raise ValueError(
                "Circular reference detected in base dictionary during deep merge"
            )
        seen[base_id] = True

        try:
            result = base.copy()
            for key, value in overlay.items():
                if (
                    key in result
                    and isinstance(result[key], dict)
                    and isinstance(value, dict)
                ):
                    result[key] = JsonDocument._deep_merge(result[key], value, seen)
                else:
                    result[key] = value
            return result
        finally:
            seen.pop(base_id, None)

    @staticmethod
    def _deep_copy(obj: Any, seen: Optional[Dict[int, Any]] = None) -> Any:
        """Deep copy a dict/list/primitive tree with circular reference protection.

        Raises:
            ValueError: If a circular reference is detected
        """
        if seen is None:
            seen = {}

        if not isinstance(obj, (dict, list)):
            return obj

        obj_id = id(obj)
        if obj_id in seen:
            raise ValueError("Circular reference detected during deep copy")
        seen[obj_id] = True

        try:
            if isinstance(obj, dict):
                return {k: JsonDocument._deep_copy(v, seen) for k, v in obj.items()}
            return [JsonDocument._deep_copy(item, seen) for item in obj]
        finally:
            seen.pop(obj_id, None)


def format_float(value: float, digits: int = CANONICAL_DIGITS) -> Optional[float]:
    """Round a float to ``digits`` significant digits; non-finite becomes None."""
    value = float(value)
    if not math.isfinite(value):
        return None
    return float(f"{value:.{digits}g}")


def canonicalize(obj: Any) -> Any:
    """Return a copy of a JSON tree with every float passed through format_float.

    Tuples become lists and numpy scalars become Python numbers.
    """
    if isinstance(obj, dict):
        return {str(k): canonicalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [canonicalize(item) for item in obj]
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, int):
        return obj
    if hasattr(obj, "item"):
        return canonicalize(obj.item())
    if isinstance(obj, float):
        return format_float(obj)
    raise TypeError(f"Cannot serialize {type(obj).__name__} to JSON")
