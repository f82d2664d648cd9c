"""Disentangled concept embeddings learned from an ontology.

Every concept gets K component vectors, one per scoring aspect (a nominated
ontology property).  Components are trained with a translational objective:
for a triple ``(i, p_k, j)`` the score

    q = sigmoid(-|| c_i^k + p_k - c_j^k ||_2)

should be high, and low against all other candidate tails.  Variants:

* ``rd``       - components are free parameters (no aggregation, L = 0);
* ``agg``      - components are refined by L rounds of property-aware
                 attentive aggregation over the augmented neighborhood graph;
* ``rd_atten`` / ``agg_atten`` - triple scoring mixes components by attention
                 against the property embedding instead of selecting the
                 aspect's own component;
* ``agg_sub``  - aggregation for component k only sees edges of property k
                 (plus the self pair).

Aggregation layer (component k, concept i, neighborhood N(i)):

    a_ij   = softmax_j( (h_i,k о W_p) . (h_j,k о W_p) )
    h'_i,k = tanh( sum_j a_ij * (h_j,k о h_p о W_p) )
    h'_p   = h_p @ Theta_p

where ``о`` is the elementwise product, W_p a per-property projection vector
and h_p the property embedding, updated per layer by a square matrix Theta.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import torch
from torch import nn

from .ontology import (
    KIND_ORIGINAL,
    NeighborhoodIndex,
    Ontology,
    ValidationError,
    augment_ontology,
    build_neighborhood_index,
)

logger = logging.getLogger(__name__)

VARIANTS = ("rd", "agg", "rd_atten", "agg_atten", "agg_sub")
PROB_CLAMP = 1e-7


@dataclass
class EncoderConfig:
    """Hyper-parameters for the disentangled encoder.

    ``k_score`` is the number of scoring aspects used; it must not exceed the
    number of aspect properties the ontology declares (fewer means "use the
    first k_score of them", which is how K-sweeps are expressed).  ``d`` is
    the total embedding width, split evenly across aspects.
    """

    k_score: int
    d: int
    layers: int = 0
    learning_rate: float = 0.001
    label_smoothing: float = 0.1
    batch_size: int = 64
    epochs: int = 100
    variant: str = "rd"
    seed: int = 0
    optimizer: str = "sgd"
    init_scale: float | None = None

    @property
    def component_dim(self) -> int:
        return self.d // self.k_score

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ValidationError(
                f"unknown variant {self.variant!r}; expected one of {VARIANTS}"
            )
        if self.k_score < 1:
            raise ValidationError("k_score must be >= 1")
        if self.d % self.k_score != 0:
            raise ValidationError(
                f"embedding width d={self.d} not divisible by k_score={self.k_score}"
            )
        is_agg = self.variant.startswith("agg")
        if is_agg and self.layers < 1:
            raise ValidationError(f"{self.variant} requires layers >= 1")
        if not is_agg and self.layers != 0:
            raise ValidationError(f"{self.variant} requires layers == 0")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ValidationError("label_smoothing must be in [0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValidationError("epochs and batch_size must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ValidationError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class ComponentEmbeddingTable:
    """Frozen (numpy) per-aspect embeddings: components[i, k] belongs to
    concept i and aspect k, in the ontology's declared aspect order."""

    concept_ids: list[str]
    aspect_ids: list[str]
    components: np.ndarray  # (n, k, dc) float64
    _idx: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.components = np.asarray(self.components, dtype=np.float64)
        if self.components.ndim != 3:
            raise ValidationError("components must have shape (n, k, dc)")
        n, k, _ = self.components.shape
        if n != len(self.concept_ids) or k != len(self.aspect_ids):
            raise ValidationError("table shape disagrees with id lists")
        self._idx = {cid: i for i, cid in enumerate(self.concept_ids)}

    @property
    def n_aspects(self) -> int:
        return len(self.aspect_ids)

    @property
    def component_dim(self) -> int:
        return self.components.shape[2]

    def concat(self) -> np.ndarray:
        """(n, k*dc) matrix: components laid side by side per concept."""
        n = len(self.concept_ids)
        return self.components.reshape(n, -1)

    def vector(self, concept_id: str) -> np.ndarray:
        return self.concat()[self._idx[concept_id]]

    def component(self, concept_id: str, k: int) -> np.ndarray:
        return self.components[self._idx[concept_id], k]

    def subset(self, concept_ids: list[str]) -> "ComponentEmbeddingTable":
        missing = [c for c in concept_ids if c not in self._idx]
        if missing:
            raise ValidationError(f"concepts absent from table: {missing}")
        rows = [self._idx[c] for c in concept_ids]
        return ComponentEmbeddingTable(
            concept_ids=list(concept_ids),
            aspect_ids=list(self.aspect_ids),
            components=self.components[rows].copy(),
        )


# ---------------------------------------------------------------------------
# scoring primitives
# ---------------------------------------------------------------------------


def translational_score(
    head: torch.Tensor, prop: torch.Tensor, tail: torch.Tensor
) -> torch.Tensor:
    """sigmoid(-||head + prop - tail||) with broadcasting over leading dims."""
    return torch.sigmoid(-torch.linalg.vector_norm(head + prop - tail, dim=-1))


def component_attention(components: torch.Tensor, prop: torch.Tensor) -> torch.Tensor:
    """Softmax over the component axis of ``components . prop``.

    ``components``: (..., K, dc); ``prop``: (..., dc) broadcast against it.
    """
    logits = (components * prop.unsqueeze(-2)).sum(-1)
    return torch.softmax(logits, dim=-1)


def attentive_mix(components: torch.Tensor, prop: torch.Tensor) -> torch.Tensor:
    """Attention-weighted component mixture, shape (..., dc)."""
    beta = component_attention(components, prop)
    return (beta.unsqueeze(-1) * components).sum(-2)


def triple_score(
    table: ComponentEmbeddingTable,
    prop_embeddings: np.ndarray,
    head: str,
    aspect: str,
    tail: str,
) -> float:
    """Score one triple from a frozen table (aspect-k component selection)."""
    if aspect not in table.aspect_ids:
        raise ValidationError(f"property {aspect!r} is not a scoring aspect")
    k = table.aspect_ids.index(aspect)
    h = torch.from_numpy(table.component(head, k))
    t = torch.from_numpy(table.component(tail, k))
    p = torch.as_tensor(np.asarray(prop_embeddings, dtype=np.float64)[k])
    return float(translational_score(h, p, t))


def attentive_triple_score(
    table: ComponentEmbeddingTable,
    prop_embeddings: np.ndarray,
    head: str,
    aspect: str,
    tail: str,
) -> float:
    """Score one triple mixing all components by attention against p_k."""
    if aspect not in table.aspect_ids:
        raise ValidationError(f"property {aspect!r} is not a scoring aspect")
    k = table.aspect_ids.index(aspect)
    p = torch.as_tensor(np.asarray(prop_embeddings, dtype=np.float64)[k])
    hc = torch.from_numpy(table.components[table._idx[head]])
    tc = torch.from_numpy(table.components[table._idx[tail]])
    return float(translational_score(attentive_mix(hc, p), p, attentive_mix(tc, p)))


def smoothed_binary_cross_entropy(
    scores: torch.Tensor,
    targets: torch.Tensor,
    label_smoothing: float,
    clamp: float = PROB_CLAMP,
) -> torch.Tensor:
    """1-vs-all cross entropy with smoothed binary targets.

    ``scores``/``targets``: (B, n_candidates).  Targets are {0, 1} and get
    smoothed to {eps, 1-eps}; scores are clamped away from {0, 1} before the
    logs.  Normalized by both batch and candidate count.
    """
    t = targets * (1.0 - label_smoothing) + (1.0 - targets) * label_smoothing
    q = scores.clamp(clamp, 1.0 - clamp)
    ll = t * q.log() + (1.0 - t) * (1.0 - q).log()
    return -ll.sum() / ll.numel()


# ---------------------------------------------------------------------------
# the encoder module
# ---------------------------------------------------------------------------


class DisentangledEncoder(nn.Module):
    """Per-aspect concept embeddings over an (internally augmented) ontology.

    Parameters are float64 and initialized from a numpy Generator so that a
    config seed pins the model bit-for-bit.
    """

    def __init__(self, ontology: Ontology, config: EncoderConfig):
        super().__init__()
        config.validate()
        if ontology.is_augmented:
            raise ValidationError("pass the unaugmented ontology; augmentation is internal")
        if config.k_score > len(ontology.aspect_properties):
            raise ValidationError(
                f"k_score={config.k_score} exceeds the {len(ontology.aspect_properties)} "
                f"declared aspect properties"
            )
        self.config = config
        self.ontology = ontology
        self.augmented, self.k_agg = augment_ontology(ontology)
        self.index = build_neighborhood_index(self.augmented)
        self.aspect_ids = list(ontology.aspect_properties[: config.k_score])
        self.is_agg = config.variant.startswith("agg")
        self.attentive = config.variant.endswith("atten")

        n = ontology.n_concepts
        dc = config.component_dim
        self.n_components = self.k_agg if self.is_agg else config.k_score
        # component holding aspect k: in agg variants components are indexed
        # by augmented property, and aspect properties are originals, so the
        # aspect's property index is its component index
        if self.is_agg:
            self.comp_of_aspect = [
                self.augmented.property_index(a) for a in self.aspect_ids
            ]
        else:
            self.comp_of_aspect = list(range(config.k_score))

        # flat edge arrays over the augmented graph, grouped by head in
        # neighborhood-index order (so attention rows align with it)
        heads, nbrs, props = [], [], []
        counts = []
        for i, entries in enumerate(self.index.entries):
            counts.append(len(entries))
            for j, p in entries:
                heads.append(i)
                nbrs.append(j)
                props.append(p)
        self.register_buffer("edge_head", torch.as_tensor(heads, dtype=torch.int64))
        self.register_buffer("edge_nbr", torch.as_tensor(nbrs, dtype=torch.int64))
        self.register_buffer("edge_prop", torch.as_tensor(props, dtype=torch.int64))
        self.edge_offsets = np.concatenate([[0], np.cumsum(counts)])

        if config.variant == "agg_sub":
            allowed = (
                self.edge_prop.unsqueeze(1)
                == torch.arange(self.n_components).unsqueeze(0)
            ) | (self.edge_prop == self.index.self_property).unsqueeze(1)
            self.register_buffer("component_edge_mask", allowed)

        rng = np.random.default_rng(config.seed)
        scale = config.init_scale if config.init_scale is not None else dc**-0.5
        self.embeddings = nn.Parameter(
            torch.from_numpy(rng.normal(0.0, scale, (n, self.n_components, dc)))
        )
        self.prop_score = nn.Parameter(
            torch.from_numpy(rng.normal(0.0, scale, (config.k_score, dc)))
        )
        if self.is_agg:
            n_props = self.augmented.n_properties
            # near-identity projections so layer 0 starts as a plain
            # attention-weighted neighbor mean
            self.w_proj = nn.Parameter(
                torch.from_numpy(1.0 + rng.normal(0.0, 0.1, (n_props, dc)))
            )
            self.prop_hidden = nn.Parameter(
                torch.from_numpy(1.0 + rng.normal(0.0, 0.1, (n_props, dc)))
            )
            eye = np.eye(dc)
            self.theta = nn.Parameter(
                torch.from_numpy(
                    eye + rng.normal(0.0, 0.1 * dc**-0.5, (config.layers, n_props, dc, dc))
                )
            )

    # -- aggregation ------------------------------------------------------

    def _segment_softmax(self, logits: torch.Tensor) -> torch.Tensor:
        """Softmax of (E, K) edge logits within each head's edge group."""
        n, k = self.ontology.n_concepts, logits.shape[1]
        seg = self.edge_head
        expanded = seg.unsqueeze(1).expand(-1, k)
        m = logits.detach().new_full((n, k), float("-inf"))
        m = m.scatter_reduce(0, expanded, logits.detach(), reduce="amax")
        z = torch.exp(logits - m[seg])
        denom = torch.zeros((n, k), dtype=logits.dtype).index_add(0, seg, z)
        return z / denom[seg]

    def edge_attention(self, table: torch.Tensor) -> torch.Tensor:
        """Attention weights (E, K) over the flat edge list given a table."""
        if not self.is_agg:
            raise ValidationError(f"variant {self.config.variant!r} does not aggregate")
        wp = self.w_proj[self.edge_prop].unsqueeze(1)  # (E, 1, dc)
        hi = table[self.edge_head] * wp
        hj = table[self.edge_nbr] * wp
        logits = (hi * hj).sum(-1)  # (E, K)
        if self.config.variant == "agg_sub":
            logits = logits.masked_fill(~self.component_edge_mask, float("-inf"))
        return self._segment_softmax(logits)

    def _aggregate(
        self, table: torch.Tensor, prop_table: torch.Tensor, layer: int
    ) -> tuple[torch.Tensor, torch.Tensor]:
        alpha = self.edge_attention(table)
        carrier = (prop_table[self.edge_prop] * self.w_proj[self.edge_prop]).unsqueeze(1)
        msg = table[self.edge_nbr] * carrier  # (E, K, dc)
        agg = torch.zeros_like(table).index_add(
            0, self.edge_head, alpha.unsqueeze(-1) * msg
        )
        next_table = torch.tanh(agg)
        next_props = torch.einsum("pd,pde->pe", prop_table, self.theta[layer])
        return next_table, next_props

    def layer_tables(self) -> list[torch.Tensor]:
        """[h^0, ..., h^L]; a single entry for non-aggregating variants."""
        tables = [self.embeddings]
        if self.is_agg:
            h, hp = self.embeddings, self.prop_hidden
            for layer in range(self.config.layers):
                h, hp = self._aggregate(h, hp, layer)
                tables.append(h)
        return tables

    def aggregate_layer(self, layer: int) -> torch.Tensor:
        """Table after aggregation layer ``layer`` (0-based), i.e. h^{layer+1}."""
        if not 0 <= layer < self.config.layers:
            raise ValidationError(f"layer {layer} out of range")
        return self.layer_tables()[layer + 1]

    def attention_weights(self, layer: int, concept: int, component: int) -> np.ndarray:
        """Attention row for one (concept, component) at a layer, aligned with
        ``neighborhood(index, concept)`` order."""
        if not 0 <= layer < self.config.layers:
            raise ValidationError(f"layer {layer} out of range")
        if not 0 <= component < self.n_components:
            raise ValidationError(f"component {component} out of range")
        table = self.layer_tables()[layer]
        alpha = self.edge_attention(table)
        lo, hi = self.edge_offsets[concept], self.edge_offsets[concept + 1]
        return alpha[lo:hi, component].detach().numpy().copy()

    # -- scoring ----------------------------------------------------------

    def component_table(self) -> torch.Tensor:
        """(n, k_score, dc) differentiable table: aspect components of h^L."""
        final = self.layer_tables()[-1]
        return final[:, self.comp_of_aspect, :]

    def score_against_all(
        self, heads: torch.Tensor, aspects: torch.Tensor
    ) -> torch.Tensor:
        """Scores (B, n_concepts) of (head, aspect_k, *) against every tail."""
        comp = self.component_table()
        p = self.prop_score[aspects]  # (B, dc)
        if self.attentive:
            head_mix = attentive_mix(comp[heads], p)  # (B, dc)
            beta = component_attention(comp.unsqueeze(0), p.unsqueeze(1))  # (B, n, K)
            tail_mix = torch.einsum("bnk,nkd->bnd", beta, comp)
            return translational_score(
                head_mix.unsqueeze(1), p.unsqueeze(1), tail_mix
            )
        hv = comp[heads, aspects]  # (B, dc)
        tails = comp.permute(1, 0, 2)[aspects]  # (B, n, dc)
        return translational_score(hv.unsqueeze(1), p.unsqueeze(1), tails)

    def score_triple(self, head: str, aspect: str, tail: str) -> float:
        """Convenience scalar score through the live (torch) parameters."""
        if aspect not in self.aspect_ids:
            raise ValidationError(f"property {aspect!r} is not a scoring aspect")
        k = self.aspect_ids.index(aspect)
        hi = self.ontology.concept_index(head)
        ti = self.ontology.concept_index(tail)
        with torch.no_grad():
            row = self.score_against_all(
                torch.tensor([hi]), torch.tensor([k])
            )
        return float(row[0, ti])

    def encode(self) -> ComponentEmbeddingTable:
        with torch.no_grad():
            comps = self.component_table().numpy().copy()
        return ComponentEmbeddingTable(
            concept_ids=[c.id for c in self.ontology.concepts],
            aspect_ids=list(self.aspect_ids),
            components=comps,
        )

    def prop_score_embeddings(self) -> np.ndarray:
        return self.prop_score.detach().numpy().copy()


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


def build_queries(
    ontology: Ontology, aspect_ids: list[str]
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Distinct (head, aspect) pairs from original triples + 0/1 target rows.

    Targets mark every true tail of (head, aspect-property) among all
    concepts.  Query order: by aspect position, then head index.
    """
    prop_pos = {ontology.property_index(a): k for k, a in enumerate(aspect_ids)}
    grouped: dict[tuple[int, int], set[int]] = {}
    for t in ontology.original_triples():
        if t.property in prop_pos:
            grouped.setdefault((prop_pos[t.property], t.head), set()).add(t.tail)
    if not grouped:
        raise ValidationError("no triples use any scoring-aspect property")
    keys = sorted(grouped)
    heads = torch.tensor([h for _, h in keys], dtype=torch.int64)
    aspects = torch.tensor([k for k, _ in keys], dtype=torch.int64)
    targets = torch.zeros((len(keys), ontology.n_concepts), dtype=torch.float64)
    for row, key in enumerate(keys):
        for tail in grouped[key]:
            targets[row, tail] = 1.0
    return heads, aspects, targets


def _make_optimizer(params, name: str, lr: float):
    if name == "adam":
        return torch.optim.Adam(params, lr=lr)
    return torch.optim.SGD(params, lr=lr)


def train_encoder(
    ontology: Ontology, config: EncoderConfig
) -> tuple[DisentangledEncoder, list[float]]:
    """Fit the encoder on the ontology's aspect queries.

    Returns the trained module and the per-epoch mean batch loss history.
    Raises RuntimeError if the loss goes non-finite.
    """
    encoder = DisentangledEncoder(ontology, config)
    heads, aspects, targets = build_queries(ontology, encoder.aspect_ids)
    rng = np.random.default_rng([config.seed, 1])
    opt = _make_optimizer(encoder.parameters(), config.optimizer, config.learning_rate)
    n_queries = heads.shape[0]
    history: list[float] = []
    for epoch in range(config.epochs):
        perm = rng.permutation(n_queries)
        losses = []
        for start in range(0, n_queries, config.batch_size):
            idx = torch.from_numpy(perm[start : start + config.batch_size])
            scores = encoder.score_against_all(heads[idx], aspects[idx])
            loss = smoothed_binary_cross_entropy(
                scores, targets[idx], config.label_smoothing
            )
            if not torch.isfinite(loss):
                raise RuntimeError(
                    f"encoder loss became non-finite at epoch {epoch} "
                    f"(variant={config.variant}, lr={config.learning_rate})"
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(loss.item())
        history.append(float(np.mean(losses)))
    return encoder, history


# ---------------------------------------------------------------------------
# TransE baseline (non-disentangled comparator / degenerate-equivalence oracle)
# ---------------------------------------------------------------------------


class TransEBaseline(nn.Module):
    """One embedding per concept and per property; same loss machinery as the
    encoder but scoring is written out independently on purpose."""

    def __init__(self, ontology: Ontology, d: int, seed: int = 0):
        super().__init__()
        if ontology.is_augmented:
            raise ValidationError("train the baseline on the unaugmented ontology")
        self.ontology = ontology
        rng = np.random.default_rng(seed)
        scale = d**-0.5
        self.entities = nn.Parameter(
            torch.from_numpy(rng.normal(0.0, scale, (ontology.n_concepts, d)))
        )
        self.props = nn.Parameter(
            torch.from_numpy(rng.normal(0.0, scale, (ontology.n_properties, d)))
        )

    def score_against_all(
        self, heads: torch.Tensor, props: torch.Tensor
    ) -> torch.Tensor:
        query = self.entities[heads] + self.props[props]  # (B, d)
        delta = query.unsqueeze(1) - self.entities.unsqueeze(0)  # (B, n, d)
        return torch.sigmoid(-torch.sqrt((delta * delta).sum(-1)))

    def score_triple(self, head: str, prop: str, tail: str) -> float:
        hi = self.ontology.concept_index(head)
        pi = self.ontology.property_index(prop)
        ti = self.ontology.concept_index(tail)
        with torch.no_grad():
            return float(
                self.score_against_all(torch.tensor([hi]), torch.tensor([pi]))[0, ti]
            )

    def entity_embeddings(self) -> np.ndarray:
        return self.entities.detach().numpy().copy()


def train_transe(
    ontology: Ontology,
    d: int,
    learning_rate: float = 0.001,
    label_smoothing: float = 0.1,
    batch_size: int = 64,
    epochs: int = 100,
    seed: int = 0,
    optimizer: str = "sgd",
) -> tuple[TransEBaseline, list[float]]:
    """Train the baseline on all original triples (every property queried)."""
    model = TransEBaseline(ontology, d, seed=seed)
    all_props = [p.id for p in ontology.properties if p.kind == KIND_ORIGINAL]
    heads, prop_pos, targets = build_queries(ontology, all_props)
    # build_queries numbers aspects by list position == property index here
    rng = np.random.default_rng([seed, 1])
    opt = _make_optimizer(model.parameters(), optimizer, learning_rate)
    n_queries = heads.shape[0]
    history: list[float] = []
    for epoch in range(epochs):
        perm = rng.permutation(n_queries)
        losses = []
        for start in range(0, n_queries, batch_size):
            idx = torch.from_numpy(perm[start : start + batch_size])
            scores = model.score_against_all(heads[idx], prop_pos[idx])
            loss = smoothed_binary_cross_entropy(scores, targets[idx], label_smoothing)
            if not torch.isfinite(loss):
                raise RuntimeError(f"baseline loss became non-finite at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(loss.item())
        history.append(float(np.mean(losses)))
    return model, history
