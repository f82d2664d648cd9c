"""Class-conditional feature stores: real, synthetic, and derived-from-KG.

A FeatureStore maps class ids to float64 feature matrices (one row per
sample).  Real visual features arrive via :func:`load_features`; synthetic
desk-scale features come from :func:`synth_features`, whose class means are a
deterministic function of the ground-truth factor labels (so independently
seeded train/test stores share class statistics and differ only in noise);
kgc "features" are entity-offset vectors of a relation's training triples.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import tensorio
from .ontology import ValidationError

logger = logging.getLogger(__name__)

KIND_REAL = "real"
KIND_SYNTHETIC = "synthetic"

# fixed salt that pins the map (factor label) -> (block mean); class means
# must agree across stores regardless of their noise seeds
_BLOCK_SALT = 9173


@dataclass
class FeatureStore:
    feature_dim: int
    kind: str
    vectors: dict[str, np.ndarray]
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in (KIND_REAL, KIND_SYNTHETIC, "mixed"):
            raise ValidationError(f"unknown feature kind {self.kind!r}")
        for cid, arr in self.vectors.items():
            arr = np.asarray(arr, dtype=np.float64)
            if arr.ndim != 2 or arr.shape[1] != self.feature_dim:
                raise ValidationError(
                    f"class {cid!r}: expected shape (n, {self.feature_dim}), "
                    f"got {arr.shape}"
                )
            self.vectors[cid] = arr
        if not self.vectors:
            msg = "feature store holds no classes"
            logger.warning(msg)
            self.warnings.append(msg)

    @property
    def class_ids(self) -> list[str]:
        return list(self.vectors)

    def n_samples(self, class_id: str) -> int:
        return int(self.vectors[class_id].shape[0])

    def subset(self, class_ids: list[str]) -> "FeatureStore":
        missing = [c for c in class_ids if c not in self.vectors]
        if missing:
            raise ValidationError(f"classes absent from store: {missing}")
        return FeatureStore(
            self.feature_dim, self.kind, {c: self.vectors[c] for c in class_ids}
        )

    def merge(self, other: "FeatureStore") -> "FeatureStore":
        """Concatenate two stores (disjoint on shared classes is not assumed:
        rows of a class present in both are stacked)."""
        if other.feature_dim != self.feature_dim:
            raise ValidationError("feature dims disagree")
        vectors = {c: a.copy() for c, a in self.vectors.items()}
        for c, a in other.vectors.items():
            vectors[c] = np.vstack([vectors[c], a]) if c in vectors else a.copy()
        kind = self.kind if self.kind == other.kind else "mixed"
        return FeatureStore(self.feature_dim, kind, vectors)

    def stacked(self) -> tuple[np.ndarray, list[str]]:
        """(X, labels): all rows stacked in class order with string labels."""
        xs, labels = [], []
        for c, a in self.vectors.items():
            xs.append(a)
            labels.extend([c] * a.shape[0])
        if not xs:
            return np.zeros((0, self.feature_dim)), []
        return np.vstack(xs), labels

    def class_means(self) -> dict[str, np.ndarray]:
        out = {}
        for c, a in self.vectors.items():
            if a.shape[0] == 0:
                raise ValidationError(f"class {c!r} has no samples to average")
            out[c] = a.mean(axis=0)
        return out


def load_features(path) -> FeatureStore:
    return tensorio.load_features(path)


def save_features(path, store: FeatureStore, fmt: str = "binary") -> None:
    tensorio.save_features(path, store, fmt=fmt)


def _block_mean(aspect: int, group: int, width: int, scale: float) -> np.ndarray:
    rng = np.random.default_rng([_BLOCK_SALT, aspect, int(group)])
    return scale * rng.standard_normal(width)


def factor_mean(
    label_pair: tuple[int, int], dim: int, scale: float = 1.0
) -> np.ndarray:
    """The deterministic mean vector for a (factor1, factor2) label pair:
    first half encodes factor 1, second half factor 2."""
    if dim % 2 != 0:
        raise ValidationError("feature dim must be even (two factor blocks)")
    half = dim // 2
    return np.concatenate(
        [_block_mean(0, label_pair[0], half, scale),
         _block_mean(1, label_pair[1], half, scale)]
    )


def synth_features(
    labels: dict[str, tuple[int, int]],
    dim: int,
    n_per_class: int,
    noise_sigma: float,
    seed: int,
    mean_scale: float = 1.0,
) -> FeatureStore:
    """Gaussian features whose means encode the two factor labels blockwise.

    Dims [0, dim/2) depend only on factor 1, the rest only on factor 2, so
    classes sharing a factor share half their mean exactly.  The means do not
    depend on ``seed`` (only the noise does).
    """
    if n_per_class < 1:
        raise ValidationError("n_per_class must be positive")
    rng = np.random.default_rng(seed)
    vectors = {}
    for cid, pair in labels.items():
        mean = factor_mean(pair, dim, mean_scale)
        vectors[cid] = mean + noise_sigma * rng.standard_normal((n_per_class, dim))
    return FeatureStore(dim, KIND_REAL, vectors)


def kgc_relation_features(
    triples: list[tuple[str, str, str]],
    entity_matrix: np.ndarray,
    entity_ids: list[str],
    relations: list[str] | None = None,
) -> FeatureStore:
    """Per-relation offset features: one row ``x_tail - x_head`` per triple.

    ``relations`` defaults to appearance order; asking for a relation with no
    triples is an error.
    """
    entity_matrix = np.asarray(entity_matrix, dtype=np.float64)
    idx = {e: i for i, e in enumerate(entity_ids)}
    grouped: dict[str, list[np.ndarray]] = {}
    for h, r, t in triples:
        if h not in idx or t not in idx:
            raise ValidationError(f"triple ({h!r}, {r!r}, {t!r}) uses unknown entity")
        offset = entity_matrix[idx[t]] - entity_matrix[idx[h]]
        grouped.setdefault(r, []).append(offset)
    if relations is None:
        relations = list(grouped)
    vectors = {}
    for r in relations:
        if r not in grouped:
            raise ValidationError(f"relation {r!r} has no triples")
        vectors[r] = np.vstack(grouped[r])
    return FeatureStore(entity_matrix.shape[1], KIND_REAL, vectors)
