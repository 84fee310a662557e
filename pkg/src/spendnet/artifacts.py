"""Deterministic CSV artifacts and the report.json document."""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

import numpy as np
import pandas as pd

REPORT_NAME = "report.json"
SCHEMA_VERSION = 1


def jsonable(obj):
    """Plain-JSON version of ``obj``: numpy scalars unwrapped, NaN/inf as null."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def matrix_frame(matrix: np.ndarray, labels=None, name: str = "class") -> pd.DataFrame:
    """Square matrix as a frame with a leading label column."""
    m = np.asarray(matrix, dtype=float)
    labels = list(range(1, len(m) + 1)) if labels is None else list(labels)
    df = pd.DataFrame(m, columns=[str(x) for x in labels])
    df.insert(0, name, labels)
    return df


class ArtifactWriter:
    """Writes CSV files into ``out_dir`` and keeps report.json in step.

    Floats are written with full round-trip precision and NaN as an empty
    field, so identical inputs give identical bytes.
    """

    def __init__(self, out_dir: str | Path):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.report = load_report(self.out_dir)

    def write_csv(self, name: str, df: pd.DataFrame, stage: str) -> Path:
        path = self.out_dir / name
        df.to_csv(path, index=False, na_rep="", lineterminator="\n", float_format=None)
        self.report.setdefault("artifacts", {})[name] = {
            "stage": stage,
            "rows": int(len(df)),
            "sha256": sha256(path),
        }
        return path

    def write_text(self, name: str, text: str, stage: str) -> Path:
        path = self.out_dir / name
        path.write_text(text, encoding="utf-8", newline="\n")
        self.report.setdefault("artifacts", {})[name] = {"stage": stage, "sha256": sha256(path)}
        return path

    def section(self, stage: str, values: dict) -> None:
        self.report.setdefault("stages", {})[stage] = jsonable(values)

    def set(self, key: str, value) -> None:
        self.report[key] = jsonable(value)

    def save(self) -> Path:
        self.report["schema_version"] = SCHEMA_VERSION
        path = self.out_dir / REPORT_NAME
        text = json.dumps(jsonable(self.report), indent=2, sort_keys=True, allow_nan=False)
        path.write_text(text + "\n", encoding="utf-8", newline="\n")
        return path


def load_report(out_dir: str | Path) -> dict:
    path = Path(out_dir) / REPORT_NAME
    if not path.exists():
        return {}
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError:
        return {}
