"""
Utility Helpers — dotted-path overrides and deterministic JSON/text writers.
"""

import json
from pathlib import Path
from typing import Any, List, Tuple, Union

from app.exceptions import ManifestError


def parse_override(text: str) -> Tuple[str, Any]:
    """
    Split `dotted.path=value`. The value is parsed as JSON; anything that
    is not valid JSON is taken as a plain string.
    """
    path, sep, raw = text.partition("=")
    if not sep or not path.strip():
        raise ManifestError(f"override {text!r} is not of the form dotted.path=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return path.strip(), value


def set_dotted(data: dict, path: str, value: Any) -> dict:
    """Replace one existing leaf of a nested dict/list structure in place."""
    keys = path.split(".")
    node = data
    for depth, key in enumerate(keys):
        where = ".".join(keys[: depth + 1])
        last = depth == len(keys) - 1
        if isinstance(node, list):
            if not key.isdigit() or int(key) >= len(node):
                raise ManifestError("no such list index", where)
            key = int(key)
        elif isinstance(node, dict):
            # Leaves of free-form maps (e.g. α per direction) may be added
            if key not in node and not (last and _is_map(node)):
                raise ManifestError("no such field", where)
        else:
            raise ManifestError("cannot descend into a scalar", where)
        if last:
            node[key] = value
        else:
            node = node[key]
    return data


def _is_map(node: dict) -> bool:
    return all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in node.values())


def dotted_diff(a: Any, b: Any, prefix: str = "") -> List[str]:
    """Dotted paths of every leaf that differs between two nested structures."""
    if isinstance(a, dict) and isinstance(b, dict):
        out = []
        for key in sorted(set(a) | set(b), key=str):
            path = f"{prefix}.{key}" if prefix else str(key)
            if key not in a or key not in b:
                out.append(path)
            else:
                out.extend(dotted_diff(a[key], b[key], path))
        return out
    if isinstance(a, list) and isinstance(b, list) and len(a) == len(b):
        out = []
        for i, (x, y) in enumerate(zip(a, b)):
            out.extend(dotted_diff(x, y, f"{prefix}.{i}" if prefix else str(i)))
        return out
    return [] if a == b else [prefix]


def canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_json(path: Union[str, Path], data: Any) -> Path:
    return write_text(path, canonical_json(data))


def write_text(path: Union[str, Path], text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def read_json(path: Union[str, Path]) -> Any:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
