"""Conditional WGAN-GP that hallucinates features for unseen classes.

Generator and critic are both two fully connected layers with LeakyReLU(0.2)
hidden activations, conditioned by concatenating the class embedding to their
input.  The critic objective (ascended) is

    E[D(x, c)] - E[D(x_hat, c)] - beta * E[(||grad_x~ D(x~, c)||_2 - 1)^2]

with x~ = eps*x + (1-eps)*x_hat interpolated per-sample; the generator
minimizes  -E[D(x_hat, c)] + lambda_cls * L_cls + lambda_reg * L_reg  where
L_cls is cross-entropy of a pre-fitted (frozen) softmax classifier on the
fakes and L_reg pulls per-class fake means toward the real class means.

After training, synthetic features for unseen classes feed an ordinary
softmax classifier (imgc) or act as relation prototypes ranked by cosine
against entity offsets (kgc).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .encoder import ComponentEmbeddingTable
from .features import KIND_SYNTHETIC, FeatureStore
from .metrics import rank_candidates
from .ontology import ValidationError

logger = logging.getLogger(__name__)


@dataclass
class GanConfig:
    noise_dim: int = 100
    hidden_g: int = 4096
    hidden_d: int = 4096
    lambda_cls: float = 0.01
    lambda_reg: float = 5.0
    beta_gp: float = 10.0
    learning_rate: float = 0.0001
    d_steps: int = 5
    epochs: int = 100
    batch_size: int = 64
    n_synth_per_class: int = 300
    clf_learning_rate: float = 0.05
    clf_epochs: int = 200
    seed: int = 0

    def validate(self) -> None:
        if min(self.noise_dim, self.hidden_g, self.hidden_d) < 1:
            raise ValidationError("layer widths must be positive")
        if min(self.epochs, self.batch_size, self.d_steps) < 1:
            raise ValidationError("epochs, batch_size and d_steps must be positive")
        if self.beta_gp < 0 or self.lambda_cls < 0 or self.lambda_reg < 0:
            raise ValidationError("loss weights must be non-negative")


def _init_linear(layer: nn.Linear, rng: np.random.Generator) -> None:
    fan_in = layer.weight.shape[1]
    w = rng.normal(0.0, fan_in**-0.5, layer.weight.shape)
    layer.weight.data = torch.from_numpy(w)
    layer.bias.data = torch.zeros(layer.bias.shape, dtype=torch.float64)


class Generator(nn.Module):
    def __init__(self, noise_dim: int, cond_dim: int, feature_dim: int,
                 hidden: int, seed: int = 0):
        super().__init__()
        self.noise_dim = noise_dim
        self.fc1 = nn.Linear(noise_dim + cond_dim, hidden, dtype=torch.float64)
        self.fc2 = nn.Linear(hidden, feature_dim, dtype=torch.float64)
        rng = np.random.default_rng([seed, 0])
        _init_linear(self.fc1, rng)
        _init_linear(self.fc2, rng)

    def forward(self, noise: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        h = F.leaky_relu(self.fc1(torch.cat([noise, cond], dim=1)), 0.2)
        return self.fc2(h)


class Critic(nn.Module):
    def __init__(self, feature_dim: int, cond_dim: int, hidden: int, seed: int = 0):
        super().__init__()
        self.fc1 = nn.Linear(feature_dim + cond_dim, hidden, dtype=torch.float64)
        self.fc2 = nn.Linear(hidden, 1, dtype=torch.float64)
        rng = np.random.default_rng([seed, 1])
        _init_linear(self.fc1, rng)
        _init_linear(self.fc2, rng)

    def forward(self, x: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        h = F.leaky_relu(self.fc1(torch.cat([x, cond], dim=1)), 0.2)
        return self.fc2(h).squeeze(-1)


def generate(gen: Generator, noise: np.ndarray, cond: np.ndarray) -> np.ndarray:
    """Pure generation: numpy in, numpy out, no RNG involved."""
    with torch.no_grad():
        out = gen(torch.from_numpy(np.asarray(noise, dtype=np.float64)),
                  torch.from_numpy(np.asarray(cond, dtype=np.float64)))
    return out.numpy()


# ---------------------------------------------------------------------------
# losses (pure functions of module + batch, so they can be finite-differenced)
# ---------------------------------------------------------------------------


def gradient_penalty(
    critic: Critic,
    x_real: torch.Tensor,
    x_fake: torch.Tensor,
    cond: torch.Tensor,
    eps: torch.Tensor,
) -> torch.Tensor:
    """E[(||grad D(x~, c)|| - 1)^2] at x~ = eps*x + (1-eps)*x_fake.

    ``eps`` is a (B,) tensor supplied by the caller so the whole loss is a
    deterministic function of its inputs.  The penalty differentiates with
    respect to the interpolates only (double backprop through the critic).
    """
    mix = eps.unsqueeze(1) * x_real + (1.0 - eps.unsqueeze(1)) * x_fake
    mix = mix.detach().requires_grad_(True)
    scores = critic(mix, cond)
    grads = torch.autograd.grad(scores.sum(), mix, create_graph=True)[0]
    norms = torch.sqrt((grads * grads).sum(dim=1) + 1e-12)
    return ((norms - 1.0) ** 2).mean()


def critic_objective(
    critic: Critic,
    x_real: torch.Tensor,
    x_fake: torch.Tensor,
    cond: torch.Tensor,
    eps: torch.Tensor,
    beta_gp: float,
) -> tuple[torch.Tensor, dict]:
    """Objective the critic ascends: real/fake gap minus the penalty."""
    gap = critic(x_real, cond).mean() - critic(x_fake, cond).mean()
    penalty = gradient_penalty(critic, x_real, x_fake, cond, eps)
    objective = gap - beta_gp * penalty
    parts = {
        "gap": gap.item(),
        "penalty": penalty.item(),
        "objective": objective.item(),
    }
    return objective, parts


def generator_loss(
    gen: Generator,
    critic: Critic,
    noise: torch.Tensor,
    cond: torch.Tensor,
    labels: torch.Tensor,
    clf_weight: torch.Tensor,
    clf_bias: torch.Tensor,
    real_means: torch.Tensor,
    lambda_cls: float,
    lambda_reg: float,
) -> tuple[torch.Tensor, dict]:
    """-E[D(fake)] + lambda_cls * CE(clf(fake), labels) + lambda_reg * L_reg.

    ``real_means`` holds the real class mean for each *label value*; L_reg
    sums squared distances between per-class fake means and those rows, over
    the classes present in the batch.
    """
    x_fake = gen(noise, cond)
    adversarial = -critic(x_fake, cond).mean()
    classification = F.cross_entropy(x_fake @ clf_weight.T + clf_bias, labels)
    regression = x_fake.new_zeros(())
    for lab in torch.unique(labels):
        fake_mean = x_fake[labels == lab].mean(dim=0)
        diff = fake_mean - real_means[lab]
        regression = regression + (diff * diff).sum()
    total = adversarial + lambda_cls * classification + lambda_reg * regression
    parts = {
        "adversarial": adversarial.item(),
        "classification": classification.item(),
        "regression": regression.item(),
        "total": total.item(),
    }
    return total, parts


# ---------------------------------------------------------------------------
# softmax classifier (pre-fit for L_cls; also the final imgc predictor)
# ---------------------------------------------------------------------------


@dataclass
class SoftmaxClassifier:
    class_ids: list[str]
    weight: np.ndarray  # (C, d)
    bias: np.ndarray  # (C,)

    def logits(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.weight.T + self.bias

    def predict(self, x: np.ndarray) -> list[str]:
        # argmax with ties broken by ascending class index
        return [self.class_ids[rank_candidates(row)[0]] for row in self.logits(x)]


def fit_softmax_classifier(
    store: FeatureStore,
    learning_rate: float = 0.05,
    epochs: int = 200,
    seed: int = 0,
) -> SoftmaxClassifier:
    """Full-batch Adam fit of a linear softmax over the store's classes."""
    x, labels = store.stacked()
    class_ids = store.class_ids
    if not class_ids or x.shape[0] == 0:
        raise ValidationError("cannot fit a classifier on an empty store")
    index = {c: i for i, c in enumerate(class_ids)}
    y = torch.tensor([index[c] for c in labels], dtype=torch.int64)
    xt = torch.from_numpy(x)
    rng = np.random.default_rng([seed, 2])
    w = torch.from_numpy(
        rng.normal(0.0, x.shape[1] ** -0.5, (len(class_ids), x.shape[1]))
    ).requires_grad_(True)
    b = torch.zeros(len(class_ids), dtype=torch.float64, requires_grad=True)
    opt = torch.optim.Adam([w, b], lr=learning_rate)
    for _ in range(epochs):
        loss = F.cross_entropy(xt @ w.T + b, y)
        if not torch.isfinite(loss):
            raise RuntimeError("classifier loss became non-finite")
        opt.zero_grad()
        loss.backward()
        opt.step()
    return SoftmaxClassifier(
        class_ids=class_ids,
        weight=w.detach().numpy().copy(),
        bias=b.detach().numpy().copy(),
    )


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


def train_gan(
    table: ComponentEmbeddingTable,
    store: FeatureStore,
    seen_classes: list[str],
    config: GanConfig,
) -> tuple[Generator, Critic, dict]:
    """Adversarial training on real seen-class features.

    Returns (generator, critic, history); history holds per-step loss parts
    for both players.  All randomness comes from config.seed.
    """
    config.validate()
    seen_store = store.subset(seen_classes)
    x_all, labels_all = seen_store.stacked()
    if x_all.shape[0] < 2:
        raise ValidationError("need at least two real samples to train")
    cond_dim = table.concat().shape[1]
    feature_dim = store.feature_dim
    class_index = {c: i for i, c in enumerate(seen_classes)}
    y_all = np.array([class_index[c] for c in labels_all])
    cond_per_class = np.stack([table.vector(c) for c in seen_classes])
    means = seen_store.class_means()
    real_means = torch.from_numpy(np.stack([means[c] for c in seen_classes]))

    classifier = fit_softmax_classifier(
        seen_store, config.clf_learning_rate, config.clf_epochs, seed=config.seed
    )
    clf_w = torch.from_numpy(classifier.weight)
    clf_b = torch.from_numpy(classifier.bias)

    gen = Generator(config.noise_dim, cond_dim, feature_dim, config.hidden_g,
                    seed=config.seed)
    critic = Critic(feature_dim, cond_dim, config.hidden_d, seed=config.seed)
    opt_g = torch.optim.Adam(gen.parameters(), lr=config.learning_rate,
                             betas=(0.5, 0.9))
    opt_d = torch.optim.Adam(critic.parameters(), lr=config.learning_rate,
                             betas=(0.5, 0.9))
    rng = np.random.default_rng([config.seed, 3])

    def sample_batch():
        idx = rng.integers(0, x_all.shape[0], size=config.batch_size)
        x = torch.from_numpy(x_all[idx])
        y = torch.from_numpy(y_all[idx])
        cond = torch.from_numpy(cond_per_class[y_all[idx]])
        return x, y, cond

    history: dict[str, list[float]] = {
        "d_gap": [], "d_penalty": [], "d_objective": [],
        "g_adversarial": [], "g_classification": [], "g_regression": [],
        "g_total": [],
    }
    for epoch in range(config.epochs):
        for _ in range(config.d_steps):
            x_real, _, cond = sample_batch()
            noise = torch.from_numpy(
                rng.standard_normal((config.batch_size, config.noise_dim))
            )
            with torch.no_grad():
                x_fake = gen(noise, cond)
            eps = torch.from_numpy(rng.uniform(size=config.batch_size))
            objective, parts = critic_objective(
                critic, x_real, x_fake, cond, eps, config.beta_gp
            )
            if not torch.isfinite(objective):
                raise RuntimeError(f"critic objective non-finite at epoch {epoch}")
            opt_d.zero_grad()
            (-objective).backward()
            opt_d.step()
            history["d_gap"].append(parts["gap"])
            history["d_penalty"].append(parts["penalty"])
            history["d_objective"].append(parts["objective"])

        _, y, cond = sample_batch()
        noise = torch.from_numpy(
            rng.standard_normal((config.batch_size, config.noise_dim))
        )
        loss, parts = generator_loss(
            gen, critic, noise, cond, y, clf_w, clf_b, real_means,
            config.lambda_cls, config.lambda_reg,
        )
        if not torch.isfinite(loss):
            raise RuntimeError(f"generator loss non-finite at epoch {epoch}")
        opt_g.zero_grad()
        loss.backward()
        opt_g.step()
        for key in ("adversarial", "classification", "regression", "total"):
            history[f"g_{key}"].append(parts[key])
    return gen, critic, history


def synthesize_dataset(
    gen: Generator,
    table: ComponentEmbeddingTable,
    class_ids: list[str],
    n_per_class: int,
    seed: int = 0,
) -> FeatureStore:
    """Draw ``n_per_class`` fake feature rows for each class."""
    if n_per_class < 0:
        raise ValidationError("n_per_class must be >= 0")
    rng = np.random.default_rng([seed, 4])
    vectors = {}
    for cid in class_ids:
        noise = rng.standard_normal((n_per_class, gen.noise_dim))
        cond = np.tile(table.vector(cid), (n_per_class, 1))
        vectors[cid] = (
            generate(gen, noise, cond)
            if n_per_class
            else np.zeros((0, gen.fc2.out_features))
        )
    return FeatureStore(gen.fc2.out_features, KIND_SYNTHETIC, vectors)


# ---------------------------------------------------------------------------
# prediction
# ---------------------------------------------------------------------------


def predict_imgc(
    train_store: FeatureStore,
    test_features: np.ndarray,
    clf_learning_rate: float = 0.05,
    clf_epochs: int = 200,
    seed: int = 0,
) -> tuple[list[str], SoftmaxClassifier]:
    """Fit a softmax on the given store and label the test rows.

    Standard ZSL passes the synthetic unseen-class store; generalized ZSL
    passes real-seen merged with synthetic-unseen (so the label space is the
    union).
    """
    clf = fit_softmax_classifier(train_store, clf_learning_rate, clf_epochs, seed)
    return clf.predict(test_features), clf


def relation_prototypes(store: FeatureStore) -> dict[str, np.ndarray]:
    """Mean feature vector per relation (used as the kgc scoring direction)."""
    return store.class_means()


def predict_kgc(
    prototypes: dict[str, np.ndarray],
    entity_matrix: np.ndarray,
    entity_ids: list[str],
    queries: list[tuple[str, str]],
) -> list[np.ndarray]:
    """Rank all candidate tails for each (head, relation) query.

    Score of tail t is the cosine between the relation prototype and the
    offset x_t - x_head; ranking is descending score with ascending-index
    tie-break.  Returns one ranked index array per query.
    """
    entity_matrix = np.asarray(entity_matrix, dtype=np.float64)
    idx = {e: i for i, e in enumerate(entity_ids)}
    ranked = []
    for head, rel in queries:
        if rel not in prototypes:
            raise ValidationError(f"no prototype for relation {rel!r}")
        if head not in idx:
            raise ValidationError(f"unknown head entity {head!r}")
        proto = prototypes[rel]
        offsets = entity_matrix - entity_matrix[idx[head]]
        denom = np.linalg.norm(offsets, axis=1) * np.linalg.norm(proto) + 1e-12
        scores = offsets @ proto / denom
        ranked.append(rank_candidates(scores))
    return ranked
