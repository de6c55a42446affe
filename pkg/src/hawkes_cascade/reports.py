"""CSV, plot-script and run-report writers.

Every CSV starts with ``#`` comment lines carrying the config hash and the
seed. Reals are written with 17 significant digits and a '.' decimal point,
which round-trips 64-bit floats exactly whatever the locale.
"""
from __future__ import annotations

import csv
import json
import platform
import sys
from pathlib import Path

import numpy as np

__all__ = [
    "fmt",
    "write_csv",
    "read_csv",
    "write_plot_script",
    "write_report",
    "versions",
]


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, columns, rows, meta: dict) -> Path:
    """Write ``rows`` under a header of ``columns``, preceded by ``# key=value`` lines."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for key, val in meta.items():
            fh.write(f"# {key}={val}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    """Header and rows of a CSV written by :func:`write_csv` (comment lines skipped)."""
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    return header, list(reader)


def write_plot_script(path, body: str, meta: dict) -> Path:
    """Gnuplot script; data files are referenced relative to the script's directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    head = "".join(f"# {k}={v}\n" for k, v in meta.items())
    prelude = "set datafile separator ','\nset key outside\n"
    path.write_text(head + prelude + body.strip() + "\n", encoding="utf-8")
    return path


def versions() -> dict:
    import numba
    import pydantic
    import scipy

    from . import __version__

    return {
        "hawkes_cascade": __version__,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
        "pydantic": pydantic.__version__,
        "platform": platform.platform(),
    }


def write_report(path, config_echo: dict, seed: int, config_hash: str, wall_time: float,
                 files: list[str], extra: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "config": config_echo,
        "config_hash": config_hash,
        "seed": seed,
        "versions": versions(),
        "wall_time_seconds": wall_time,
        "files": files,
    }
    if extra:
        doc["results"] = extra
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n", encoding="utf-8")
    return path


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")
