"""Classifier propagation over per-aspect semantic graphs.

One graph per embedding component: classes are nodes, connected when the
cosine similarity of their component-k vectors exceeds a threshold tau.  A
GCN with weights *shared across the K graphs* maps component embeddings to a
classifier vector per class on each graph; the K outputs are fused (average
or learned linear map) and regressed onto ground-truth classifiers of the
seen classes — the mean training feature of each class.  Unseen classes
inherit classifiers through propagation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .encoder import ComponentEmbeddingTable
from .features import FeatureStore
from .metrics import rank_candidates
from .ontology import ValidationError

logger = logging.getLogger(__name__)

FUSION_MODES = ("average", "linear")


@dataclass
class GcnConfig:
    tau: float = 0.95
    hidden_dim: int = 2048
    layers: int = 2
    learning_rate: float = 0.001
    epochs: int = 300
    fusion: str = "average"
    leaky_slope: float = 0.2
    seed: int = 0

    def validate(self) -> None:
        if not -1.0 <= self.tau <= 1.0:
            raise ValidationError("tau must lie in [-1, 1]")
        if self.fusion not in FUSION_MODES:
            raise ValidationError(f"unknown fusion mode {self.fusion!r}")
        if self.layers < 1 or self.hidden_dim < 1 or self.epochs < 1:
            raise ValidationError("layers, hidden_dim and epochs must be positive")


@dataclass
class SemanticGraph:
    aspect_id: str
    class_ids: list[str]
    adjacency: np.ndarray  # (m, m) with self-loops, symmetric 0/1
    features: np.ndarray  # (m, dc) component embeddings


def build_semantic_graphs(
    table: ComponentEmbeddingTable, tau: float
) -> list[SemanticGraph]:
    """One thresholded-cosine graph per component of the (class-subset) table."""
    comps = table.components
    norms = np.linalg.norm(comps, axis=2)
    if (norms == 0).any():
        bad = [
            (table.concept_ids[i], int(k))
            for i, k in zip(*np.nonzero(norms == 0))
        ]
        raise ValidationError(f"zero-norm component vectors: {bad[:5]}")
    graphs = []
    for k, aspect in enumerate(table.aspect_ids):
        x = comps[:, k, :]
        unit = x / norms[:, k][:, None]
        cos = unit @ unit.T
        adj = (cos > tau).astype(np.float64)
        adj = np.maximum(adj, adj.T)  # cosine is symmetric; keep it explicit
        np.fill_diagonal(adj, 1.0)
        graphs.append(SemanticGraph(aspect, list(table.concept_ids), adj, x.copy()))
    return graphs


def normalize_adjacency(adj: np.ndarray) -> np.ndarray:
    """Symmetric normalization D^-1/2 A D^-1/2 (rows must have self-loops)."""
    adj = np.asarray(adj, dtype=np.float64)
    deg = adj.sum(axis=1)
    if (deg <= 0).any():
        raise ValidationError("adjacency has an isolated row without self-loop")
    inv_sqrt = 1.0 / np.sqrt(deg)
    return adj * inv_sqrt[:, None] * inv_sqrt[None, :]


def fuse(z_list: list[torch.Tensor], mode: str, weight: torch.Tensor | None = None):
    """Combine K per-graph outputs (each (m, F)) into one classifier matrix.

    ``average`` is the mean, computed around the first output as a provisional
    mean (so K identical inputs reproduce the input bit-for-bit); ``linear``
    concatenates along features and applies a (K*F, F) map.  A
    block-scaled-identity weight (K stacked F-dim identities divided by K)
    makes the two identical.
    """
    if not z_list:
        raise ValidationError("no outputs to fuse")
    if mode == "average":
        base = z_list[0]
        if len(z_list) == 1:
            return base
        dev = torch.stack([z - base for z in z_list[1:]]).sum(dim=0)
        return base + dev / len(z_list)
    if mode == "linear":
        if weight is None:
            raise ValidationError("linear fusion needs a weight matrix")
        return torch.cat(z_list, dim=1) @ weight
    raise ValidationError(f"unknown fusion mode {mode!r}")


class ClassifierPropagator(nn.Module):
    """GCN with weights shared across the K semantic graphs."""

    def __init__(
        self,
        in_dim: int,
        out_dim: int,
        n_graphs: int,
        config: GcnConfig,
    ):
        super().__init__()
        config.validate()
        self.config = config
        rng = np.random.default_rng([config.seed, 0])
        dims = [in_dim] + [config.hidden_dim] * (config.layers - 1) + [out_dim]
        self.weights = nn.ParameterList(
            nn.Parameter(
                torch.from_numpy(
                    rng.normal(0.0, dims[i] ** -0.5, (dims[i], dims[i + 1]))
                )
            )
            for i in range(config.layers)
        )
        if config.fusion == "linear":
            # start exactly at average fusion: stacked identities over K
            eye = np.tile(np.eye(out_dim), (n_graphs, 1)) / n_graphs
            self.fusion_weight = nn.Parameter(torch.from_numpy(eye))
        else:
            self.fusion_weight = None

    def propagate(
        self, norm_adjs: list[torch.Tensor], feats: list[torch.Tensor]
    ) -> list[torch.Tensor]:
        """Per-graph outputs Z_k; hidden layers use LeakyReLU, output is linear."""
        outs = []
        for adj, x in zip(norm_adjs, feats):
            h = x
            for i, w in enumerate(self.weights):
                h = adj @ h @ w
                if i < len(self.weights) - 1:
                    h = F.leaky_relu(h, self.config.leaky_slope)
            outs.append(h)
        return outs

    def forward(
        self, norm_adjs: list[torch.Tensor], feats: list[torch.Tensor]
    ) -> torch.Tensor:
        return fuse(self.propagate(norm_adjs, feats), self.config.fusion,
                    self.fusion_weight)


def ground_truth_classifiers(
    store: FeatureStore, class_ids: list[str]
) -> np.ndarray:
    """Stack per-class mean feature vectors in the given class order."""
    means = store.subset(class_ids).class_means()
    return np.stack([means[c] for c in class_ids])


def seen_regression_loss(
    fused: torch.Tensor, targets: torch.Tensor, seen_rows: torch.Tensor
) -> torch.Tensor:
    """Mean over seen classes of the squared distance to the target row."""
    diff = fused[seen_rows] - targets
    return (diff * diff).sum(dim=1).mean()


def train_gcn(
    graphs: list[SemanticGraph],
    gt_classifiers: np.ndarray,
    seen_classes: list[str],
    config: GcnConfig,
) -> tuple[ClassifierPropagator, list[float]]:
    """Regress fused outputs onto seen-class ground truth; returns history.

    ``gt_classifiers`` rows align with ``seen_classes``; graph node order is
    taken from the graphs (all graphs must share it).
    """
    if not graphs:
        raise ValidationError("no semantic graphs given")
    class_ids = graphs[0].class_ids
    for g in graphs:
        if g.class_ids != class_ids:
            raise ValidationError("graphs disagree on class order")
    row = {c: i for i, c in enumerate(class_ids)}
    missing = [c for c in seen_classes if c not in row]
    if missing:
        raise ValidationError(f"seen classes missing from graphs: {missing}")
    seen_rows = torch.tensor([row[c] for c in seen_classes], dtype=torch.int64)
    targets = torch.from_numpy(np.asarray(gt_classifiers, dtype=np.float64))
    if targets.shape[0] != len(seen_classes):
        raise ValidationError("one ground-truth classifier per seen class required")

    norm_adjs = [torch.from_numpy(normalize_adjacency(g.adjacency)) for g in graphs]
    feats = [torch.from_numpy(g.features) for g in graphs]
    model = ClassifierPropagator(
        in_dim=graphs[0].features.shape[1],
        out_dim=targets.shape[1],
        n_graphs=len(graphs),
        config=config,
    )
    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    history = []
    for epoch in range(config.epochs):
        fused = model(norm_adjs, feats)
        loss = seen_regression_loss(fused, targets, seen_rows)
        if not torch.isfinite(loss):
            raise RuntimeError(f"gcn loss became non-finite at epoch {epoch}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        history.append(loss.item())
    return model, history


def propagate_classifiers(
    model: ClassifierPropagator, graphs: list[SemanticGraph]
) -> np.ndarray:
    """Fused classifier matrix (m, F) for all graph nodes."""
    norm_adjs = [torch.from_numpy(normalize_adjacency(g.adjacency)) for g in graphs]
    feats = [torch.from_numpy(g.features) for g in graphs]
    with torch.no_grad():
        return model(norm_adjs, feats).numpy().copy()


def predict_by_classifiers(
    classifiers: np.ndarray,
    class_ids: list[str],
    test_features: np.ndarray,
    allowed: list[str] | None = None,
) -> list[str]:
    """Label test rows by the highest-scoring classifier (dot product).

    ``allowed`` restricts the candidate label set (standard ZSL passes the
    unseen classes); ties break by ascending candidate index.
    """
    if allowed is not None:
        keep = [class_ids.index(c) for c in allowed]
        classifiers = classifiers[keep]
        class_ids = list(allowed)
    scores = np.asarray(test_features, dtype=np.float64) @ classifiers.T
    return [class_ids[rank_candidates(row)[0]] for row in scores]
