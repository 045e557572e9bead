"""LRMX binary matrix format and the JSON manifests built on top of it.

Layout (little-endian)::

    b"LRMX" | u16 version (=1) | u32 rows | u32 cols | rows*cols float64, row-major
"""
import base64
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"LRMX"
VERSION = 1
_HEADER = struct.Struct("<4sHII")


class FormatError(ValueError):
    pass


def dumps(M):
    M = np.asarray(M, dtype="<f8")
    if M.ndim != 2:
        raise FormatError(f"LRMX stores 2-d matrices, got shape {M.shape}")
    rows, cols = M.shape
    return _HEADER.pack(MAGIC, VERSION, rows, cols) + np.ascontiguousarray(M).tobytes()


def loads(data):
    if len(data) < _HEADER.size:
        raise FormatError("truncated LRMX header")
    magic, version, rows, cols = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported LRMX version {version}")
    expected = _HEADER.size + 8 * rows * cols
    if len(data) != expected:
        raise FormatError(f"LRMX payload is {len(data)} bytes, expected {expected}")
    vals = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    return vals.reshape(rows, cols).astype(np.float64)


def save(path, M):
    Path(path).write_bytes(dumps(M))


def load(path):
    return loads(Path(path).read_bytes())


def to_b64(M):
    return base64.b64encode(dumps(M)).decode("ascii")


def from_b64(s):
    return loads(base64.b64decode(s))


# ---------------------------------------------------------------------------
# manifests: JSON documents whose matrix fields name LRMX files relative to
# the manifest's own directory


def _resolve(base, name):
    p = Path(name)
    return p if p.is_absolute() else base / p


def read_manifest(path):
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None
    return doc, path.parent


def load_model_manifest(path):
    """``{"W": file, "adapters": [{"A": file, "B": file}, ...], "activation": name}``"""
    doc, base = read_manifest(path)
    try:
        W = load(_resolve(base, doc["W"]))
        adapters = [
            (load(_resolve(base, a["A"])), load(_resolve(base, a["B"])))
            for a in doc.get("adapters", [])
        ]
    except KeyError as exc:
        raise FormatError(f"{path}: missing field {exc}") from None
    return W, adapters, doc.get("activation", "identity")


def write_model_manifest(path, W, adapters, activation="identity"):
    path = Path(path)
    base = path.parent
    stem = path.stem
    save(base / f"{stem}_W.lrmx", W)
    entries = []
    for i, (A, B) in enumerate(adapters, start=1):
        save(base / f"{stem}_A{i}.lrmx", A)
        save(base / f"{stem}_B{i}.lrmx", B)
        entries.append({"A": f"{stem}_A{i}.lrmx", "B": f"{stem}_B{i}.lrmx"})
    doc = {"W": f"{stem}_W.lrmx", "adapters": entries, "activation": activation}
    path.write_text(json.dumps(doc, indent=2) + "\n")


def load_factor_bundle(path, names):
    """Bundle ``{"adapters": [{"A": file, "B": file, ...}, ...]}``.

    ``names`` selects the factor fields read from each entry, e.g. ``("A", "B")``
    for the matrix tree or ``("A", "B", "C")`` for the tensor tree.
    """
    doc, base = read_manifest(path)
    entries = doc.get("adapters", doc.get("factors"))
    if entries is None:
        raise FormatError(f"{path}: expected an 'adapters' or 'factors' list")
    try:
        return [tuple(load(_resolve(base, e[nm])) for nm in names) for e in entries]
    except KeyError as exc:
        raise FormatError(f"{path}: factor entry missing field {exc}") from None


def write_factor_bundle(path, factors, names):
    path = Path(path)
    base = path.parent
    stem = path.stem
    entries = []
    for i, group in enumerate(factors, start=1):
        entry = {}
        for nm, M in zip(names, group):
            fname = f"{stem}_{nm}{i}.lrmx"
            save(base / fname, M)
            entry[nm] = fname
        entries.append(entry)
    key = "adapters" if len(names) == 2 else "factors"
    path.write_text(json.dumps({key: entries}, indent=2) + "\n")
