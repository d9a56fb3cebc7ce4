"""Writing figure-ready tables and reproducibility manifests.

Floats are written with nine significant digits everywhere (CSV and JSON),
so a JSON table converts to the identical CSV text.
"""

from __future__ import annotations

import hashlib
import json
import math
import platform
import sys
from pathlib import Path
from typing import Mapping, Sequence

from xecrel.errors import ConfigError, OutputError


def fmt(x) -> str:
    if x is None:
        return "nan"
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, int):
        return str(x)
    return f"{float(x):.9g}"


def _rounded(x):
    if isinstance(x, (bool, int)):
        return int(x)
    x = float(x)
    return float(fmt(x)) if math.isfinite(x) else None


def _check_table(columns: Mapping[str, Sequence]) -> int:
    if not columns:
        raise ConfigError("nothing to emit: no columns", path="columns")
    lengths = {len(v) for v in columns.values()}
    if len(lengths) != 1 or 0 in lengths:
        raise ConfigError(f"columns must be nonempty and equally long, got lengths {sorted(lengths)}", path="columns")
    return lengths.pop()


def table_csv(columns: Mapping[str, Sequence]) -> str:
    n = _check_table(columns)
    names = list(columns)
    lines = [",".join(names)]
    for i in range(n):
        lines.append(",".join(fmt(columns[c][i]) for c in names))
    return "\n".join(lines) + "\n"


def table_json(columns: Mapping[str, Sequence]) -> str:
    _check_table(columns)
    doc = {"columns": list(columns), "data": {c: [_rounded(v) for v in vals] for c, vals in columns.items()}}
    return json.dumps(doc, indent=1, allow_nan=False) + "\n"


def json_to_csv(text: str) -> str:
    doc = json.loads(text)
    return table_csv({c: doc["data"][c] for c in doc["columns"]})


def _round_tree(obj):
    if isinstance(obj, dict):
        return {str(k): _round_tree(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_tree(v) for v in obj]
    if isinstance(obj, (bool, str)) or obj is None:
        return obj
    if isinstance(obj, (int, float)) or hasattr(obj, "__float__"):
        if isinstance(obj, int) or (hasattr(obj, "dtype") and obj.dtype.kind in "iu"):
            return int(obj)
        x = float(obj)
        return float(fmt(x)) if math.isfinite(x) else None
    return obj


def dumps(obj) -> str:
    """JSON with floats at nine significant digits and sorted keys."""
    return json.dumps(_round_tree(obj), indent=2, sort_keys=True) + "\n"


def write_text(path, text: str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def emit_curves(columns: Mapping[str, Sequence], path, format: str = "csv") -> Path:
    """Write a table of equally long series, columns in the given order."""
    if format == "csv":
        return write_text(path, table_csv(columns))
    if format == "json":
        return write_text(path, table_json(columns))
    raise ConfigError(f"unknown format {format!r}", path="format")


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def versions() -> dict:
    import numpy
    import scipy

    from xecrel import __version__

    return {
        "xecrel": __version__,
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def manifest(command: str, argv: Sequence[str], params: dict, seed, inputs=(), outputs=()) -> dict:
    """Everything needed to rerun a command; deliberately free of timestamps."""
    return {
        "command": command,
        "argv": list(argv),
        "params": params,
        "seed": seed,
        "inputs": {str(p): sha256(p) for p in inputs},
        "outputs": [Path(p).name for p in outputs],
        "versions": versions(),
    }


def manifest_path_for(output) -> Path:
    output = Path(output)
    return output.with_name(output.name + ".manifest.json")
