"""File formats: coefficient snapshots, iteration histories, reports and data tables.

Coefficient snapshot (JSON)::

    {
      "format": "cavispec-snapshot",
      "version": 1,
      "header": {"N": 16, "M": 32, "eps": 1e-3, "gamma": 1.0,
                 "lambda1": 2.0, "lambda2": 2.0, "material": "default"},
      "config": {...fully resolved problem configuration...},
      "packing": ["alpha", "beta", "xi", "eta"],
      "y": [...]
    }

``y`` is the vector of free coefficients in packing order: the alpha, beta,
xi and eta blocks in turn, each ordered Fourier-index-major then Chebyshev
degree j = 1..M. Floats are written with ``repr`` precision so a reload is
bit exact.

All writers go through :func:`atomic_write`, so a reader never sees a
partially written file.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

SNAPSHOT_FORMAT = "cavispec-snapshot"
SNAPSHOT_VERSION = 1
PACKING = ("alpha", "beta", "xi", "eta")
HISTORY_COLUMNS = ("iteration", "phase", "t", "energy", "fnorm", "min_D", "tol", "accepted")


class SnapshotError(ValueError):
    pass


def atomic_write(path, text: str) -> Path:
    """Write ``text`` to ``path`` through a temporary file in the same directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _jsonable(value):
    """Convert numpy scalars/arrays and non-finite floats for strict JSON."""
    if isinstance(value, Mapping):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return value


def write_json(path, data) -> Path:
    return atomic_write(path, json.dumps(_jsonable(data), indent=2, allow_nan=False) + "\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


# --- snapshots ------------------------------------------------------------------------------

def snapshot_dict(config, y) -> dict:
    """Snapshot payload for a :class:`cavispec.problem.ProblemConfig` and coefficient vector."""
    y = np.asarray(y, dtype=float)
    return {
        "format": SNAPSHOT_FORMAT,
        "version": SNAPSHOT_VERSION,
        "header": {
            "N": config.N, "M": config.M, "eps": config.eps, "gamma": config.gamma,
            "lambda1": config.lambda1, "lambda2": config.lambda2,
            "material": config.build_material().tag,
        },
        "config": config.to_dict(),
        "packing": list(PACKING),
        "y": [float(v) for v in y],
    }


def write_snapshot(path, config, y) -> Path:
    return write_json(path, snapshot_dict(config, y))


def read_snapshot(path):
    """Load a snapshot; returns ``(config, y)``.

    The header is checked against the embedded configuration and the length
    of ``y`` against the unknown count 2NM.
    """
    from .problem import ProblemConfig

    data = read_json(path)
    if data.get("format") != SNAPSHOT_FORMAT:
        raise SnapshotError(f"{path}: not a coefficient snapshot")
    config = ProblemConfig.from_dict(data["config"])
    header = data["header"]
    for key in ("N", "M", "eps", "gamma", "lambda1", "lambda2"):
        if header[key] != getattr(config, key):
            raise SnapshotError(f"{path}: header {key}={header[key]!r} disagrees with config")
    y = np.array(data["y"], dtype=float)
    if y.size != 2 * config.N * config.M:
        raise SnapshotError(f"{path}: expected {2 * config.N * config.M} coefficients, found {y.size}")
    return config, y


# --- tables ---------------------------------------------------------------------------------

def history_rows(history: Iterable) -> list:
    return [
        {"iteration": h.iteration, "phase": h.phase, "t": h.t, "energy": h.energy, "fnorm": h.fnorm,
         "min_D": h.min_det, "tol": h.tol, "accepted": int(h.accepted)}
        for h in history
    ]


def _csv_text(columns: Sequence[str], rows: Iterable[Mapping]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                         for k, v in row.items()})
    return buf.getvalue()


def write_csv(path, columns: Sequence[str], rows: Iterable[Mapping]) -> Path:
    return atomic_write(path, _csv_text(columns, rows))


def write_history_csv(path, history) -> Path:
    return write_csv(path, HISTORY_COLUMNS, history_rows(history))


def read_history_csv(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_report(path, report, config, **extra) -> Path:
    """SolveReport JSON with the fully resolved configuration embedded."""
    data = {"config": config.to_dict(), "report": report.to_dict()}
    data.update(extra)
    return write_json(path, data)


def write_profile_csv(path, profile) -> Path:
    rows = ({"r": r, "s": s} for r, s in zip(profile.r_grid, profile.s_values))
    return write_csv(path, ("r", "s"), rows)


def write_table(path, columns: Sequence[str], rows: Iterable[Sequence], comments: Sequence[str] = ()) -> Path:
    """Whitespace-separated text table with ``#`` header comments, for plotting tools."""
    lines = [f"# {c}" for c in comments]
    lines.append("# " + " ".join(columns))
    for row in rows:
        lines.append(" ".join(_cell(v) for v in row))
    return atomic_write(path, "\n".join(lines) + "\n")


def _cell(value) -> str:
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.16e}"
    return str(value)


def read_table(path) -> np.ndarray:
    return np.loadtxt(path, comments="#", ndmin=2)


def read_samples_csv(path) -> list:
    """Rows of a (N, M, q) samples file as :class:`cavispec.analysis.ConvergenceSample`."""
    from .analysis import ConvergenceSample

    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"N", "M", "q"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        out = []
        for lineno, row in enumerate(reader, start=2):
            try:
                out.append(ConvergenceSample(int(float(row["N"])), int(float(row["M"])), float(row["q"])))
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return out
