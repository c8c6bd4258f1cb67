"""CSV feature tables, model files and vine spec files."""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .bicop import INDEPENDENCE
from .classify import ClassifierBundle
from .errors import InvalidInputError
from .vine import VineModel, VineStructure, validate_structure

MODEL_FORMAT = "vinefuse-model"
MODEL_VERSION = 1


class ParseError(InvalidInputError):
    """Malformed CSV; ``line`` and ``column`` locate the offending cell."""

    def __init__(self, message, line=None, column=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line = line
        self.column = column


@dataclass(frozen=True, eq=False)
class FeatureTable:
    """Feature matrix plus header; names may carry a ``source.`` prefix."""

    names: tuple
    values: np.ndarray
    labels: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if len(set(self.names)) != len(self.names):
            raise ParseError("duplicate feature names in header")
        if self.values.shape[1] != len(self.names):
            raise ParseError("table is not rectangular")
        if self.labels is not None and any(l == "" for l in self.labels):
            raise ParseError("empty class label")

    def columns(self, names) -> np.ndarray:
        """Select feature columns by name, in the given order."""
        index = {n: i for i, n in enumerate(self.names)}
        return self.values[:, [index[n] for n in names]]

    def layout_mismatch(self, names) -> tuple[list, list]:
        """(missing, extra) feature names relative to ``names``."""
        have, want = set(self.names), set(names)
        return [n for n in names if n not in have], [n for n in self.names if n not in want]


def read_features(path, label_col: str | None = None) -> FeatureTable:
    """Read a comma-separated feature file with a header row."""
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from None
    except UnicodeDecodeError:
        raise ParseError(f"{path} is not UTF-8 text") from None
    if not rows:
        raise ParseError("empty file", line=1)
    header = [h.strip() for h in rows[0]]
    if label_col is not None and label_col not in header:
        raise ParseError(f"label column {label_col!r} not in header", line=1)
    lab = header.index(label_col) if label_col is not None else None
    names = [h for i, h in enumerate(header) if i != lab]
    if any(not n for n in names):
        raise ParseError("empty column name in header", line=1)
    values, labels = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(row)}", line=lineno)
        vals = []
        for i, cell in enumerate(row):
            if i == lab:
                labels.append(cell.strip())
                continue
            try:
                x = float(cell)
            except ValueError:
                raise ParseError(f"cannot parse {cell!r} as a number",
                                 line=lineno, column=header[i]) from None
            if not math.isfinite(x):
                raise ParseError(f"non-finite value {cell!r}", line=lineno, column=header[i])
            vals.append(x)
        values.append(vals)
    if not values:
        raise ParseError("no data rows")
    return FeatureTable(tuple(names), np.asarray(values, dtype=float),
                        tuple(labels) if lab is not None else None)


def write_csv(path, header, rows):
    """Write rows; floats use ``repr`` so they read back bit-exactly."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(c)) if isinstance(c, (float, np.floating)) else c for c in row])


def file_digest(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def save_model(path, bundle: ClassifierBundle, provenance: dict | None = None):
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "provenance": {"generator": f"vinefuse {__version__}", **(provenance or {})},
        "bundle": bundle.to_dict(),
    }
    with Path(path).open("w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path) -> ClassifierBundle:
    try:
        with Path(path).open(encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read model {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"model file is not valid JSON: {exc.msg}", line=exc.lineno) from None
    if doc.get("format") != MODEL_FORMAT:
        raise ParseError("not a vinefuse model file")
    if doc.get("version") != MODEL_VERSION:
        raise ParseError(f"unsupported model version {doc.get('version')!r}")
    try:
        return ClassifierBundle.from_dict(doc["bundle"])
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed model file: {exc}") from None


@dataclass(frozen=True)
class SimulationSpec:
    """Vine model plus optional normal marginals for ``simulate``."""

    vine: VineModel
    names: tuple
    means: tuple | None = None
    sds: tuple | None = None


def load_vine_spec(path) -> SimulationSpec:
    """Read a JSON vine spec (same edge-list schema as a model's vine section).

    Edges that name no family are independent.

    Raises :class:`ParseError` with the validation report for an invalid
    structure.
    """
    try:
        with Path(path).open(encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read spec {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"spec is not valid JSON: {exc.msg}", line=exc.lineno) from None
    try:
        structure = VineStructure.from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed vine spec: {exc}") from None
    violation = validate_structure(structure)
    if violation is not None:
        raise ParseError(f"invalid vine structure: {violation}")
    K = structure.dimension
    names = tuple(doc.get("names") or (f"x{k}" for k in range(K)))
    if len(names) != K:
        raise ParseError(f"spec lists {len(names)} names for dimension {K}")
    means = sds = None
    margs = doc.get("marginals")
    if margs is not None:
        if len(margs) != K:
            raise ParseError(f"spec lists {len(margs)} marginals for dimension {K}")
        means = tuple(float(m.get("mean", 0.0)) for m in margs)
        sds = tuple(float(m.get("sd", 1.0)) for m in margs)
        if not all(s > 0 for s in sds):
            raise ParseError("marginal sd must be positive")
    # edges without a family default to independence
    structure = VineStructure(K, tuple(
        tuple(e if e.copula is not None else e.with_copula(INDEPENDENCE) for e in tree)
        for tree in structure.trees))
    return SimulationSpec(VineModel(structure), names, means, sds)
