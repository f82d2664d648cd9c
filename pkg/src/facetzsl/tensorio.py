"""Bit-exact persistence for embedding tables, feature stores and checkpoints.

Two interchangeable encodings:

* text: ``#``-prefixed header lines, then one tab-separated row per record
  with floats rendered via ``repr`` (shortest string that round-trips the
  exact float64 value);
* binary: a single JSON header line (utf-8, ``\\n``-terminated) followed by
  raw little-endian float64 bytes in C order.

Loaders sniff the first byte (``{`` means binary, ``#`` means text), so a
path is all callers need to remember.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

_DTYPE = "<f8"


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_binary(path: Path, header: dict, arrays: list[np.ndarray]) -> None:
    blob = json.dumps(header, sort_keys=True).encode("utf-8") + b"\n"
    with open(path, "wb") as fh:
        fh.write(blob)
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype=np.float64).tobytes())


def _read_binary(path: Path) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        flat = np.frombuffer(fh.read(), dtype=_DTYPE).astype(np.float64)
    return header, flat


def _sniff_binary(path: Path) -> bool:
    with open(path, "rb") as fh:
        first = fh.read(1)
    if first == b"{":
        return True
    if first == b"#":
        return False
    raise ValueError(f"{path}: unrecognised file format")


# ---------------------------------------------------------------------------
# component embedding tables
# ---------------------------------------------------------------------------


def save_table(path: str | Path, table, fmt: str = "binary") -> None:
    """Persist a ComponentEmbeddingTable (see :mod:`facetzsl.encoder`)."""
    path = Path(path)
    n, k, dc = table.components.shape
    if fmt == "binary":
        header = {
            "kind": "component_table",
            "concept_ids": list(table.concept_ids),
            "aspect_ids": list(table.aspect_ids),
            "shape": [n, k, dc],
        }
        _write_binary(path, header, [table.components])
    elif fmt == "text":
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"#component_table\t{n}\t{k}\t{dc}\n")
            fh.write("#aspects\t" + "\t".join(table.aspect_ids) + "\n")
            for i, cid in enumerate(table.concept_ids):
                for kk in range(k):
                    row = "\t".join(_fmt(v) for v in table.components[i, kk])
                    fh.write(f"{cid}\t{kk}\t{row}\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")


def load_table(path: str | Path):
    from .encoder import ComponentEmbeddingTable

    path = Path(path)
    if _sniff_binary(path):
        header, flat = _read_binary(path)
        if header.get("kind") != "component_table":
            raise ValueError(f"{path}: not a component table")
        n, k, dc = header["shape"]
        return ComponentEmbeddingTable(
            concept_ids=list(header["concept_ids"]),
            aspect_ids=list(header["aspect_ids"]),
            components=flat.reshape(n, k, dc),
        )
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().rstrip("\n").split("\t")
        if first[0] != "#component_table":
            raise ValueError(f"{path}: not a component table")
        n, k, dc = (int(x) for x in first[1:4])
        aspects = fh.readline().rstrip("\n").split("\t")[1:]
        comps = np.zeros((n, k, dc), dtype=np.float64)
        concept_ids: list[str] = []
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            cid, kk = parts[0], int(parts[1])
            if kk == 0:
                concept_ids.append(cid)
            i = len(concept_ids) - 1
            comps[i, kk] = [float(v) for v in parts[2:]]
    return ComponentEmbeddingTable(
        concept_ids=concept_ids, aspect_ids=aspects, components=comps
    )


# ---------------------------------------------------------------------------
# feature stores
# ---------------------------------------------------------------------------


def save_features(path: str | Path, store, fmt: str = "binary") -> None:
    path = Path(path)
    classes = list(store.vectors)
    if fmt == "binary":
        header = {
            "kind": "feature_store",
            "feature_dim": store.feature_dim,
            "source": store.kind,
            "classes": [[c, int(store.vectors[c].shape[0])] for c in classes],
        }
        _write_binary(path, header, [store.vectors[c] for c in classes])
    elif fmt == "text":
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"#feature_store\t{store.feature_dim}\t{store.kind}\n")
            for c in classes:
                for row in store.vectors[c]:
                    fh.write(c + "\t" + "\t".join(_fmt(v) for v in row) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")


def load_features(path: str | Path):
    from .features import FeatureStore

    path = Path(path)
    if _sniff_binary(path):
        header, flat = _read_binary(path)
        if header.get("kind") != "feature_store":
            raise ValueError(f"{path}: not a feature store")
        dim = header["feature_dim"]
        vectors: dict[str, np.ndarray] = {}
        offset = 0
        for cid, count in header["classes"]:
            vectors[cid] = flat[offset : offset + count * dim].reshape(count, dim)
            offset += count * dim
        return FeatureStore(feature_dim=dim, kind=header["source"], vectors=vectors)
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().rstrip("\n").split("\t")
        if first[0] != "#feature_store":
            raise ValueError(f"{path}: not a feature store")
        dim, source = int(first[1]), first[2]
        rows: dict[str, list[list[float]]] = {}
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            rows.setdefault(parts[0], []).append([float(v) for v in parts[1:]])
    vectors = {
        c: np.asarray(r, dtype=np.float64).reshape(len(r), dim)
        for c, r in rows.items()
    }
    return FeatureStore(feature_dim=dim, kind=source, vectors=vectors)


# ---------------------------------------------------------------------------
# named-tensor checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(
    path: str | Path, tensors: dict[str, np.ndarray], meta: dict | None = None
) -> None:
    path = Path(path)
    names = list(tensors)
    header = {
        "kind": "checkpoint",
        "meta": meta or {},
        "tensors": [[n, list(tensors[n].shape)] for n in names],
    }
    _write_binary(path, header, [tensors[n] for n in names])


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    header, flat = _read_binary(path)
    if header.get("kind") != "checkpoint":
        raise ValueError(f"{path}: not a checkpoint")
    tensors: dict[str, np.ndarray] = {}
    offset = 0
    for name, shape in header["tensors"]:
        size = int(np.prod(shape)) if shape else 1
        tensors[name] = flat[offset : offset + size].reshape(shape)
        offset += size
    return tensors, header["meta"]


def write_json(path: str | Path, obj) -> None:
    """Deterministic JSON: sorted keys, plain floats, trailing newline."""

    def clean(x):
        if isinstance(x, dict):
            return {str(k): clean(v) for k, v in x.items()}
        if isinstance(x, (list, tuple)):
            return [clean(v) for v in x]
        if isinstance(x, (np.floating, np.integer)):
            return x.item()
        if isinstance(x, np.ndarray):
            return [clean(v) for v in x.tolist()]
        return x

    with open(path, "w", encoding="utf-8") as fh:
        json.dump(clean(obj), fh, sort_keys=True, indent=2)
        fh.write("\n")
