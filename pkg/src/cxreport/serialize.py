"""Canonical JSON writer used by every on-disk format.

Floats are rendered with 17 significant digits, which is lossless for IEEE-754
doubles, so ``save(load(path))`` reproduces the file byte for byte. Layout is
deterministic: containers of scalars stay on one line, containers of
containers get one element per line with two-space indent.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

import numpy as np

from .errors import IoError, MalformedFile


def format_float(x: float) -> str:
    if not math.isfinite(x):
        raise MalformedFile(f"non-finite float cannot be serialized: {x!r}")
    return format(float(x), ".17g")


def _is_scalar(x: Any) -> bool:
    return not isinstance(x, (dict, list, tuple, np.ndarray))


def _encode(value: Any, indent: int) -> str:
    pad = " " * indent
    if value is None:
        return "null"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_float(float(value))
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    if isinstance(value, dict):
        if not value:
            return "{}"
        parts = [
            f'{pad}  {json.dumps(str(k), ensure_ascii=False)}: {_encode(v, indent + 2)}'
            for k, v in value.items()
        ]
        return "{\n" + ",\n".join(parts) + "\n" + pad + "}"
    if isinstance(value, (list, tuple, np.ndarray)):
        items = list(value)
        if not items:
            return "[]"
        if all(_is_scalar(x) for x in items):
            return "[" + ", ".join(_encode(x, 0) for x in items) + "]"
        parts = [pad + "  " + _encode(x, indent + 2) for x in items]
        return "[\n" + ",\n".join(parts) + "\n" + pad + "]"
    raise TypeError(f"unsupported type for canonical JSON: {type(value)!r}")


def _encode_compact(value: Any) -> str:
    if value is None:
        return "null"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_float(float(value))
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    if isinstance(value, dict):
        parts = [
            f'{json.dumps(str(k), ensure_ascii=False)}: {_encode_compact(v)}'
            for k, v in value.items()
        ]
        return "{" + ", ".join(parts) + "}"
    if isinstance(value, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_encode_compact(x) for x in value) + "]"
    raise TypeError(f"unsupported type for canonical JSON: {type(value)!r}")


def dumps(value: Any) -> str:
    return _encode(value, 0) + "\n"


def dump_json(path: str | Path, value: Any) -> None:
    try:
        Path(path).write_text(dumps(value), encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_json(path: str | Path) -> Any:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedFile(f"{path}: invalid JSON ({exc})") from exc


def dump_jsonl(path: str | Path, rows: list[Any]) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(_encode_compact(row) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_jsonl(path: str | Path) -> list[Any]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise MalformedFile(f"{path}:{lineno}: invalid JSON ({exc})") from exc
    return rows
