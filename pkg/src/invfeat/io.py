"""File formats: XYZ molecules, matrix and point-cloud text files, JSON."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .core import SymMatrix, matrix_from_text, matrix_to_text
from .errors import ParseError
from .pointcloud import cloud_from_text, cloud_to_text
from .targets import Molecule

ELEMENTS = (
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne",
    "Na", "Mg", "Al", "Si", "P", "S", "Cl", "Ar",
)
ATOMIC_NUMBER = {sym: z for z, sym in enumerate(ELEMENTS, start=1)}


def atomic_number(symbol: str) -> int:
    key = symbol.strip().capitalize()
    try:
        return ATOMIC_NUMBER[key]
    except KeyError:
        raise ValueError(f"unknown element symbol {symbol!r} (supported: H through Ar)") from None


def parse_xyz(text: str, path=None) -> Molecule:
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty XYZ file", 1, path)
    try:
        count = int(lines[0].strip())
    except ValueError:
        raise ParseError(f"expected atom count, got {lines[0].strip()!r}", 1, path) from None
    if count < 1:
        raise ParseError(f"atom count must be positive, got {count}", 1, path)
    if len(lines) < 2 + count:
        raise ParseError(f"expected {count} atom lines, found {max(len(lines) - 2, 0)}", len(lines), path)
    symbols, z, coords = [], [], []
    for k in range(count):
        lineno = k + 3
        parts = lines[k + 2].split()
        if len(parts) < 4:
            raise ParseError("expected 'symbol x y z'", lineno, path)
        try:
            z.append(atomic_number(parts[0]))
        except ValueError as exc:
            raise ParseError(str(exc), lineno, path) from None
        try:
            coords.append([float(v) for v in parts[1:4]])
        except ValueError as exc:
            raise ParseError(str(exc), lineno, path) from None
        symbols.append(parts[0].strip().capitalize())
    for lineno, ln in enumerate(lines[2 + count :], start=3 + count):
        if ln.strip():
            raise ParseError("trailing content after atom lines", lineno, path)
    return Molecule(np.array(z, dtype=np.float64), np.array(coords), tuple(symbols))


def format_xyz(mol: Molecule, comment: str = "") -> str:
    if mol.symbols is not None:
        symbols = mol.symbols
    else:
        symbols = tuple(ELEMENTS[int(round(z)) - 1] for z in mol.charges)
    body = "\n".join(
        f"{s} " + " ".join(format(float(c), ".17g") for c in r) for s, r in zip(symbols, mol.coords)
    )
    return f"{mol.n}\n{comment}\n{body}\n"


def load_xyz(path) -> Molecule:
    return parse_xyz(Path(path).read_text(), path)


def load_matrix(path) -> SymMatrix:
    return matrix_from_text(Path(path).read_text(), path)


def load_cloud(path) -> np.ndarray:
    return cloud_from_text(Path(path).read_text(), path)


def atomic_write(path, data: str | bytes):
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data.encode() if isinstance(data, str) else data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_matrix(path, X):
    atomic_write(path, matrix_to_text(X))


def save_cloud(path, V):
    atomic_write(path, cloud_to_text(V))


def save_json(path, obj):
    atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def load_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, path) from None


def load_pair_manifest(path):
    """``{"clouds": [paths], "pairs": [[i, j, target], ...]}``; paths relative to the manifest."""
    from .targets import LabeledPairDataset

    path = Path(path)
    data = load_json(path)
    if not isinstance(data, dict) or "clouds" not in data or "pairs" not in data:
        raise ParseError("pair manifest needs 'clouds' and 'pairs'", None, path)
    clouds = [load_cloud(path.parent / p) for p in data["clouds"]]
    rows = data["pairs"]
    try:
        pairs = [(int(r[0]), int(r[1])) for r in rows]
        targets = [float(r[2]) for r in rows]
    except (TypeError, ValueError, IndexError):
        raise ParseError("each pair must be [i, j, target]", None, path) from None
    return LabeledPairDataset(clouds, np.array(pairs, dtype=np.int64).reshape(-1, 2), np.array(targets))


def load_matrix_manifest(path):
    """``{"matrices": [paths], "targets": [reals]}``; paths relative to the manifest."""
    path = Path(path)
    data = load_json(path)
    if not isinstance(data, dict) or "matrices" not in data:
        raise ParseError("matrix manifest needs 'matrices'", None, path)
    mats = [load_matrix(path.parent / p) for p in data["matrices"]]
    targets = data.get("targets")
    if targets is not None:
        targets = np.asarray(targets, dtype=np.float64)
        if targets.shape != (len(mats),):
            raise ParseError("one target per matrix required", None, path)
    return mats, targets
