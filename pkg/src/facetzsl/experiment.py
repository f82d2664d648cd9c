"""Experiment orchestration: configs, pipeline stages, sweeps, case studies.

A run is: ingest data -> train the encoder -> (kgc only: embed entities with
the TransE baseline and derive relation offset features) -> train one learner
-> evaluate.  Every stage persists its artifacts into an append-only output
directory and every random draw descends from one root seed, split per stage
by fixed labels, so a run is fully reconstructible from its config echo.

Configs are flat ``key = value`` text with dotted section prefixes
(``encoder.d = 16``); sections map onto the dataclass configs of the
individual modules.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import logging
import types
import typing
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import gan as gan_mod
from . import gcn as gcn_mod
from . import tensorio
from .encoder import (
    ComponentEmbeddingTable,
    EncoderConfig,
    train_encoder,
    train_transe,
)
from .features import (
    FeatureStore,
    factor_mean,
    kgc_relation_features,
    load_features,
    save_features,
    synth_features,
)
from .metrics import (
    harmonic_mean_accuracy,
    macro_accuracy,
    summarize_ranks,
)
from .ontology import (
    Concept,
    DatasetSplit,
    Ontology,
    OntologyTriple,
    ParseError,
    Property,
    ValidationError,
    load_split,
    parse_triples,
    serialize_triples,
    synth_ontology,
    write_split,
)

logger = logging.getLogger(__name__)


class StageError(RuntimeError):
    """A pipeline stage failed; the message names the stage."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


def stage_seed(root: int, label: str) -> int:
    """Deterministic child seed for a named stage."""
    digest = hashlib.sha256(f"{root}/{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _fresh(stage: str, path: Path) -> Path:
    if path.exists():
        raise StageError(stage, f"refusing to overwrite existing {path}")
    return path


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass
class DataConfig:
    ontology: str = ""
    split: str = ""
    features_train: str = ""
    features_test: str = ""


@dataclass
class TransEConfig:
    """Entity embeddings for kgc tasks (relation features are entity offsets)."""

    d: int = 16
    learning_rate: float = 0.01
    epochs: int = 200
    batch_size: int = 128
    optimizer: str = "adam"
    seed: int = 0


@dataclass
class EvalConfig:
    hits_ks: tuple = (1, 5, 10)
    filtered: bool = False


@dataclass
class ExperimentConfig:
    task: str = "imgc"
    learner: str = "gan"
    seed: int = 0
    data: DataConfig = field(default_factory=DataConfig)
    encoder: EncoderConfig = field(
        default_factory=lambda: EncoderConfig(
            k_score=2, d=16, epochs=300, learning_rate=0.01, optimizer="adam"
        )
    )
    gan: gan_mod.GanConfig = field(default_factory=gan_mod.GanConfig)
    gcn: gcn_mod.GcnConfig = field(default_factory=gcn_mod.GcnConfig)
    transe: TransEConfig = field(default_factory=TransEConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def validate(self) -> None:
        if self.task not in ("imgc", "kgc"):
            raise ValidationError(f"unknown task {self.task!r}")
        if self.learner not in ("gan", "gcn"):
            raise ValidationError(f"unknown learner {self.learner!r}")
        self.encoder.validate()
        self.gan.validate()
        self.gcn.validate()


_SECTIONS = {
    "data": DataConfig,
    "encoder": EncoderConfig,
    "gan": gan_mod.GanConfig,
    "gcn": gcn_mod.GcnConfig,
    "transe": TransEConfig,
    "eval": EvalConfig,
}
_TOP_KEYS = ("task", "learner", "seed")


def _coerce(raw: str, target_type) -> object:
    origin = typing.get_origin(target_type)
    if target_type is bool:
        low = raw.strip().lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ValidationError(f"expected a boolean, got {raw!r}")
    if target_type is int:
        return int(raw)
    if target_type is float:
        return float(raw)
    if target_type is str:
        return raw
    if origin is tuple or target_type is tuple:
        items = [s for s in raw.split(",") if s.strip()]
        return tuple(int(s) for s in items)
    if origin in (typing.Union, types.UnionType):  # Optional[...] fields
        args = [a for a in typing.get_args(target_type) if a is not type(None)]
        if raw.strip().lower() in ("none", ""):
            return None
        return _coerce(raw, args[0])
    raise ValidationError(f"cannot coerce config value for type {target_type}")


def _value_to_str(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def config_to_flat(config: ExperimentConfig) -> dict[str, str]:
    """Flatten to sorted string pairs; per-stage seeds are derived, not stored."""
    flat: dict[str, str] = {k: _value_to_str(getattr(config, k)) for k in _TOP_KEYS}
    for section, cls in _SECTIONS.items():
        sub = getattr(config, section)
        for f in fields(cls):
            if f.name == "seed":
                continue
            flat[f"{section}.{f.name}"] = _value_to_str(getattr(sub, f.name))
    return dict(sorted(flat.items()))


def apply_overrides(
    config: ExperimentConfig, overrides: dict[str, str]
) -> ExperimentConfig:
    """Typed application of flat ``section.key -> raw string`` pairs."""
    top = {k: getattr(config, k) for k in _TOP_KEYS}
    subs = {name: getattr(config, name) for name in _SECTIONS}
    hints = {
        name: typing.get_type_hints(cls) for name, cls in _SECTIONS.items()
    }
    for key, raw in overrides.items():
        if key in _TOP_KEYS:
            top[key] = _coerce(raw, int if key == "seed" else str)
            continue
        if "." not in key:
            raise ValidationError(f"unknown config key {key!r}")
        section, _, name = key.partition(".")
        if section not in _SECTIONS or name not in hints[section]:
            raise ValidationError(f"unknown config key {key!r}")
        if name == "seed":
            raise ValidationError(
                f"{key}: per-stage seeds are derived from the root seed"
            )
        subs[section] = replace(
            subs[section], **{name: _coerce(raw, hints[section][name])}
        )
    return ExperimentConfig(**top, **subs)


def flat_to_config(flat: dict[str, str]) -> ExperimentConfig:
    return apply_overrides(ExperimentConfig(), flat)


def format_config(config: ExperimentConfig) -> str:
    lines = [f"{k} = {v}" for k, v in config_to_flat(config).items()]
    return "\n".join(lines) + "\n"


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Read ``key = value`` lines; blank lines and ``#`` comments ignored."""
    flat: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError(f"{Path(path).name}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            flat[key.strip()] = value.strip()
    return flat


def _seeded(config: ExperimentConfig) -> ExperimentConfig:
    """Fill per-stage seeds from the root seed."""
    return replace(
        config,
        encoder=replace(config.encoder, seed=stage_seed(config.seed, "encoder")),
        gan=replace(config.gan, seed=stage_seed(config.seed, "gan")),
        gcn=replace(config.gcn, seed=stage_seed(config.seed, "gcn")),
        transe=replace(config.transe, seed=stage_seed(config.seed, "transe")),
    )


# ---------------------------------------------------------------------------
# pipeline stages
# ---------------------------------------------------------------------------


@dataclass
class ExperimentReport:
    config: dict[str, str]
    metrics: dict
    histories: dict[str, list]
    artifacts: dict[str, str]


def _triples_to_ontology(triples: list[tuple[str, str, str]]) -> Ontology:
    """View an instance KG as an ontology so TransE machinery applies."""
    concept_idx: dict[str, int] = {}
    prop_idx: dict[str, int] = {}
    out = []
    for h, r, t in triples:
        for e in (h, t):
            if e not in concept_idx:
                concept_idx[e] = len(concept_idx)
        if r not in prop_idx:
            prop_idx[r] = len(prop_idx)
        out.append(OntologyTriple(concept_idx[h], prop_idx[r], concept_idx[t]))
    onto = Ontology(
        concepts=[Concept(e, i) for e, i in concept_idx.items()],
        properties=[Property(r, i) for r, i in prop_idx.items()],
        triples=out,
        aspect_properties=list(prop_idx),
    )
    onto.validate()
    return onto


def _rank_position(ranked: np.ndarray, true_index: int,
                   excluded: set[int] | None = None) -> int:
    """1-based rank of the true candidate inside a ranked index array,
    optionally skipping (filtering out) other known-true candidates."""
    rank = 0
    for j in ranked:
        if excluded and int(j) in excluded and int(j) != true_index:
            continue
        rank += 1
        if int(j) == true_index:
            return rank
    raise ValidationError("true candidate missing from ranking")


def _evaluate_imgc(
    config: ExperimentConfig,
    train_store: FeatureStore,
    test_store: FeatureStore,
    split: DatasetSplit,
    synth_store: FeatureStore | None,
    classifiers: np.ndarray | None,
    class_ids: list[str],
) -> dict:
    test_x, test_y = test_store.stacked()
    unseen = split.unseen_classes
    seen = split.seen_classes
    unseen_rows = [i for i, y in enumerate(test_y) if y in set(unseen)]
    if not unseen_rows:
        raise ValidationError("test store holds no unseen-class samples")
    clf_seed = stage_seed(config.seed, "predict")
    if config.learner == "gan":
        pred_std, _ = gan_mod.predict_imgc(
            synth_store.subset(unseen), test_x[unseen_rows],
            config.gan.clf_learning_rate, config.gan.clf_epochs, seed=clf_seed,
        )
        merged = train_store.subset(seen).merge(synth_store.subset(unseen))
        pred_gen, _ = gan_mod.predict_imgc(
            merged, test_x,
            config.gan.clf_learning_rate, config.gan.clf_epochs, seed=clf_seed,
        )
    else:
        pred_std = gcn_mod.predict_by_classifiers(
            classifiers, class_ids, test_x[unseen_rows], allowed=unseen
        )
        pred_gen = gcn_mod.predict_by_classifiers(classifiers, class_ids, test_x)
    true_unseen = [test_y[i] for i in unseen_rows]
    acc_std = macro_accuracy(true_unseen, pred_std, unseen)
    acc_seen = macro_accuracy(test_y, pred_gen, seen)
    acc_unseen = macro_accuracy(test_y, pred_gen, unseen)
    return {
        "standard_macro_acc": acc_std,
        "generalized_seen_acc": acc_seen,
        "generalized_unseen_acc": acc_unseen,
        "generalized_H": harmonic_mean_accuracy(acc_seen, acc_unseen),
    }


def _evaluate_kgc(
    config: ExperimentConfig,
    split: DatasetSplit,
    entity_matrix: np.ndarray,
    entity_ids: list[str],
    synth_store: FeatureStore | None,
    classifiers: np.ndarray | None,
    class_ids: list[str],
) -> dict:
    if config.learner == "gan":
        prototypes = gan_mod.relation_prototypes(
            synth_store.subset(split.unseen_classes)
        )
    else:
        prototypes = {
            c: classifiers[class_ids.index(c)] for c in split.unseen_classes
        }
    queries = [(h, r) for h, r, _ in split.kgc_test]
    ranked = gan_mod.predict_kgc(prototypes, entity_matrix, entity_ids, queries)
    ent_idx = {e: i for i, e in enumerate(entity_ids)}
    known: dict[tuple[str, str], set[int]] = {}
    if config.eval.filtered:
        for part in (split.kgc_train, split.kgc_valid, split.kgc_test):
            for h, r, t in part or []:
                known.setdefault((h, r), set()).add(ent_idx[t])
    ranks = []
    for (h, r, t), order in zip(split.kgc_test, ranked):
        excluded = known.get((h, r)) if config.eval.filtered else None
        ranks.append(_rank_position(order, ent_idx[t], excluded))
    out = summarize_ranks(ranks, config.eval.hits_ks)
    out["ranking"] = "filtered" if config.eval.filtered else "raw"
    out["n_queries"] = len(ranks)
    return out


def run(
    config: ExperimentConfig,
    out_dir: str | Path,
    through: str = "evaluate",
) -> ExperimentReport:
    """Execute the pipeline up to and including stage ``through``.

    Stages: ingest, encoder, learner, evaluate.  Artifacts land in
    ``out_dir`` (created if missing, individual files never overwritten).
    """
    stage_order = ("ingest", "encoder", "learner", "evaluate")
    if through not in stage_order:
        raise ValidationError(f"unknown stage {through!r}")
    config.validate()
    config = _seeded(config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    artifacts: dict[str, str] = {}
    histories: dict[str, list] = {}
    flat = config_to_flat(config)

    cfg_path = _fresh("ingest", out / "config.txt")
    cfg_path.write_text(format_config(config), encoding="utf-8")
    artifacts["config"] = str(cfg_path)

    # -- ingest ----------------------------------------------------------
    try:
        ontology = parse_triples(config.data.ontology)
        split = load_split(config.data.split, ontology)
        if split.task_kind != config.task:
            raise ValidationError(
                f"config task {config.task!r} but split file says "
                f"{split.task_kind!r}"
            )
        train_store = test_store = None
        if config.task == "imgc":
            train_store = load_features(config.data.features_train)
            test_store = load_features(config.data.features_test)
        summary = {
            "n_concepts": ontology.n_concepts,
            "n_properties": ontology.n_properties,
            "n_triples": len(ontology.triples),
            "n_seen": len(split.seen_classes),
            "n_unseen": len(split.unseen_classes),
        }
        if config.task == "kgc":
            summary.update(
                n_train_triples=len(split.kgc_train),
                n_valid_triples=len(split.kgc_valid),
                n_test_triples=len(split.kgc_test),
                n_entities=len(split.entities),
            )
        tensorio.write_json(_fresh("ingest", out / "ingest_summary.json"), summary)
        artifacts["ingest_summary"] = str(out / "ingest_summary.json")
    except (ParseError, ValidationError, OSError) as exc:
        raise StageError("ingest", str(exc)) from exc
    if through == "ingest":
        return ExperimentReport(flat, {}, histories, artifacts)

    # -- encoder ----------------------------------------------------------
    try:
        encoder, history = train_encoder(ontology, config.encoder)
        table = encoder.encode()
        histories["encoder"] = history
        emb_path = _fresh("encoder", out / "embeddings.bin")
        tensorio.save_table(emb_path, table)
        tensorio.write_json(
            _fresh("encoder", out / "encoder_history.json"), {"loss": history}
        )
        artifacts["embeddings"] = str(emb_path)
    except (ValidationError, RuntimeError) as exc:
        if isinstance(exc, StageError):
            raise
        raise StageError("encoder", str(exc)) from exc
    if through == "encoder":
        return ExperimentReport(flat, {}, histories, artifacts)

    # -- learner ----------------------------------------------------------
    task_classes = split.all_classes
    entity_matrix = entity_ids = None
    try:
        task_table = table.subset(task_classes)
        if config.task == "kgc":
            kg_onto = _triples_to_ontology(split.kgc_train)
            transe_model, transe_hist = train_transe(
                kg_onto,
                config.transe.d,
                learning_rate=config.transe.learning_rate,
                batch_size=config.transe.batch_size,
                epochs=config.transe.epochs,
                seed=config.transe.seed,
                optimizer=config.transe.optimizer,
            )
            histories["transe"] = transe_hist
            entity_ids = [c.id for c in kg_onto.concepts]
            entity_matrix = transe_model.entity_embeddings()
            tensorio.save_checkpoint(
                _fresh("learner", out / "entity_embeddings.bin"),
                {"entities": entity_matrix},
                meta={"entity_ids": entity_ids},
            )
            artifacts["entity_embeddings"] = str(out / "entity_embeddings.bin")
            train_store = kgc_relation_features(
                split.kgc_train, entity_matrix, entity_ids, split.seen_classes
            )
            rel_path = _fresh("learner", out / "relation_features.bin")
            save_features(rel_path, train_store)
            artifacts["relation_features"] = str(rel_path)

        synth_store = classifiers = None
        if config.learner == "gan":
            generator, critic, gan_hist = gan_mod.train_gan(
                task_table, train_store, split.seen_classes, config.gan
            )
            histories["gan"] = gan_hist
            synth_store = gan_mod.synthesize_dataset(
                generator,
                task_table,
                split.unseen_classes,
                config.gan.n_synth_per_class,
                seed=stage_seed(config.seed, "synth"),
            )
            synth_path = _fresh("learner", out / "synthetic_features.bin")
            save_features(synth_path, synth_store)
            artifacts["synthetic_features"] = str(synth_path)
            tensorio.save_checkpoint(
                _fresh("learner", out / "generator.bin"),
                {
                    name: p.detach().numpy().copy()
                    for name, p in generator.named_parameters()
                },
                meta={"noise_dim": generator.noise_dim},
            )
            artifacts["generator"] = str(out / "generator.bin")
            tensorio.write_json(
                _fresh("learner", out / "gan_history.json"), gan_hist
            )
        else:
            graphs = gcn_mod.build_semantic_graphs(task_table, config.gcn.tau)
            gt = gcn_mod.ground_truth_classifiers(train_store, split.seen_classes)
            model, gcn_hist = gcn_mod.train_gcn(
                graphs, gt, split.seen_classes, config.gcn
            )
            histories["gcn"] = gcn_hist
            classifiers = gcn_mod.propagate_classifiers(model, graphs)
            tensorio.save_checkpoint(
                _fresh("learner", out / "classifiers.bin"),
                {"classifiers": classifiers},
                meta={"class_ids": task_classes},
            )
            artifacts["classifiers"] = str(out / "classifiers.bin")
            graph_path = _fresh("learner", out / "semantic_graphs.tsv")
            with open(graph_path, "w", encoding="utf-8") as fh:
                fh.write("aspect\tclass_a\tclass_b\n")
                for g in graphs:
                    for i, j in zip(*np.nonzero(np.triu(g.adjacency))):
                        fh.write(
                            f"{g.aspect_id}\t{g.class_ids[i]}\t{g.class_ids[j]}\n"
                        )
            artifacts["semantic_graphs"] = str(graph_path)
            tensorio.write_json(
                _fresh("learner", out / "gcn_history.json"), {"loss": gcn_hist}
            )
    except (ValidationError, RuntimeError) as exc:
        if isinstance(exc, StageError):
            raise
        raise StageError("learner", str(exc)) from exc
    if through == "learner":
        return ExperimentReport(flat, {}, histories, artifacts)

    # -- evaluate ----------------------------------------------------------
    try:
        if config.task == "imgc":
            metric_values = _evaluate_imgc(
                config, train_store, test_store, split,
                synth_store, classifiers, task_classes,
            )
        else:
            metric_values = _evaluate_kgc(
                config, split, entity_matrix, entity_ids,
                synth_store, classifiers, task_classes,
            )
        metrics = {
            "task": config.task,
            "learner": config.learner,
            "variant": config.encoder.variant,
            "seed": config.seed,
            **metric_values,
        }
        write_metrics(out, metrics, stage="evaluate")
        artifacts["metrics"] = str(out / "metrics.json")
    except (ValidationError, RuntimeError) as exc:
        if isinstance(exc, StageError):
            raise
        raise StageError("evaluate", str(exc)) from exc
    return ExperimentReport(flat, metrics, histories, artifacts)


def write_metrics(out_dir: Path, metrics: dict, stage: str = "evaluate") -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tensorio.write_json(_fresh(stage, out_dir / "metrics.json"), metrics)
    keys = sorted(metrics)
    with open(_fresh(stage, out_dir / "metrics.csv"), "w", encoding="utf-8",
              newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(keys)
        writer.writerow([_value_to_str(metrics[k]) for k in keys])


def evaluate_run(run_dir: str | Path, out_dir: str | Path | None = None) -> dict:
    """Recompute metrics from a finished training run's persisted artifacts.

    Writes metrics.json/.csv into ``out_dir`` (default: the run dir itself);
    rerunning with the same artifacts is byte-identical.
    """
    run_dir = Path(run_dir)
    out = Path(out_dir) if out_dir is not None else run_dir
    try:
        config = flat_to_config(parse_config_file(run_dir / "config.txt"))
        config = replace(config)  # seeds in the echo are already derived ones
        ontology = parse_triples(config.data.ontology)
        split = load_split(config.data.split, ontology)
        task_classes = split.all_classes
        synth_store = classifiers = None
        train_store = test_store = None
        entity_matrix = entity_ids = None
        if config.task == "imgc":
            train_store = load_features(config.data.features_train)
            test_store = load_features(config.data.features_test)
        else:
            tensors, meta = tensorio.load_checkpoint(
                run_dir / "entity_embeddings.bin"
            )
            entity_matrix, entity_ids = tensors["entities"], meta["entity_ids"]
        if config.learner == "gan":
            synth_store = load_features(run_dir / "synthetic_features.bin")
        else:
            tensors, meta = tensorio.load_checkpoint(run_dir / "classifiers.bin")
            classifiers = tensors["classifiers"]
            if meta["class_ids"] != task_classes:
                raise ValidationError("classifier artifact class order mismatch")
        if config.task == "imgc":
            metric_values = _evaluate_imgc(
                config, train_store, test_store, split,
                synth_store, classifiers, task_classes,
            )
        else:
            metric_values = _evaluate_kgc(
                config, split, entity_matrix, entity_ids,
                synth_store, classifiers, task_classes,
            )
        metrics = {
            "task": config.task,
            "learner": config.learner,
            "variant": config.encoder.variant,
            "seed": config.seed,
            **metric_values,
        }
        write_metrics(out, metrics, stage="evaluate")
        return metrics
    except (OSError, ParseError, ValidationError, RuntimeError) as exc:
        if isinstance(exc, StageError):
            raise
        raise StageError("evaluate", str(exc)) from exc


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


def sweep(
    base: ExperimentConfig,
    grid: dict[str, list[str]],
    out_dir: str | Path,
) -> list[dict]:
    """Cross product of config overrides; one full run per cell.

    A grid key may name several comma-joined config keys whose values move
    together (``"encoder.variant,encoder.layers": ["rd,0", "agg,1"]``), which
    is how constrained pairs like variant/layer-count are swept.  Failed
    cells record their error and the sweep continues.  Rows (and sweep.csv)
    hold the grid values plus the metrics of each cell.
    """
    if not grid:
        raise ValidationError("empty sweep grid")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dims: list[list[dict[str, str]]] = []
    flat_keys: list[str] = []
    for key in sorted(grid):
        subkeys = [k.strip() for k in key.split(",")]
        flat_keys.extend(subkeys)
        cells = []
        for value in grid[key]:
            parts = (
                [p.strip() for p in str(value).split(",")]
                if len(subkeys) > 1
                else [str(value)]
            )
            if len(parts) != len(subkeys):
                raise ValidationError(
                    f"grid value {value!r} does not match keys {subkeys}"
                )
            cells.append(dict(zip(subkeys, parts)))
        dims.append(cells)
    rows: list[dict] = []
    for cell in itertools.product(*dims):
        overrides: dict[str, str] = {}
        for part in cell:
            overrides.update(part)
        cell_name = "__".join(
            f"{k.replace('.', '-')}={v}" for k, v in sorted(overrides.items())
        )
        row: dict = dict(overrides)
        try:
            cfg = apply_overrides(base, overrides)
            report = run(cfg, out / cell_name)
            row.update(report.metrics)
        except (StageError, ValidationError, RuntimeError) as exc:
            logger.warning("sweep cell %s failed: %s", cell_name, exc)
            row["error"] = str(exc)
        rows.append(row)
    columns = flat_keys + sorted({k for r in rows for k in r} - set(flat_keys))
    with open(out / "sweep.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_value_to_str(row.get(c, "")) for c in columns])
    return rows


# ---------------------------------------------------------------------------
# case study: factor recovery in component space
# ---------------------------------------------------------------------------


def nn_factor_purity(
    table: ComponentEmbeddingTable,
    labels: dict[str, tuple[int, int]],
    component: int,
    factor: int,
) -> float:
    """Fraction of classes whose nearest neighbor in component space shares
    their ground-truth factor label (ties by ascending index)."""
    ids = [c for c in table.concept_ids if c in labels]
    if len(ids) < 2:
        raise ValidationError("need at least two labelled classes")
    rows = np.array([table.concept_ids.index(c) for c in ids])
    x = table.components[rows, component, :]
    dist = np.linalg.norm(x[:, None, :] - x[None, :, :], axis=2)
    np.fill_diagonal(dist, np.inf)
    nn = dist.argmin(axis=1)
    lab = [labels[c][factor] for c in ids]
    return float(np.mean([lab[i] == lab[j] for i, j in enumerate(nn)]))


def purity_chance_level(labels: dict[str, tuple[int, int]], factor: int) -> float:
    """Probability a uniformly random other class shares the factor label."""
    values = [v[factor] for v in labels.values()]
    n = len(values)
    if n < 2:
        raise ValidationError("need at least two labelled classes")
    counts: dict[int, int] = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    return sum(m * (m - 1) for m in counts.values()) / (n * (n - 1))


def _pca_2d(x: np.ndarray) -> np.ndarray:
    """Top-2 principal coordinates with a deterministic sign convention."""
    centered = x - x.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    n_pc = min(2, vt.shape[0])
    coords = np.zeros((x.shape[0], 2))
    coords[:, :n_pc] = centered @ vt[:n_pc].T
    for j in range(2):
        col = coords[:, j]
        if col.any() and col[np.abs(col).argmax()] < 0:
            coords[:, j] = -col
    return coords


def export_case_study(
    table: ComponentEmbeddingTable,
    out_dir: str | Path,
    labels: dict[str, tuple[int, int]] | None = None,
    n_neighbors: int = 2,
) -> dict[str, str]:
    """Write per-component PCA coordinates and nearest-neighbor lists.

    Produces ``coords.csv`` (component, class, x, y[, factor labels]) and
    ``neighbors.csv`` (component, class, nn_1..nn_k).  Needs >= 3 concepts.
    """
    if len(table.concept_ids) < 3:
        raise ValidationError("case study needs at least 3 concepts")
    if n_neighbors < 1 or n_neighbors >= len(table.concept_ids):
        raise ValidationError("n_neighbors out of range")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    coords_path = _fresh("case-study", out / "coords.csv")
    nn_path = _fresh("case-study", out / "neighbors.csv")

    with open(coords_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        header = ["component", "class", "x", "y"]
        if labels is not None:
            header += ["factor1", "factor2"]
        writer.writerow(header)
        for k, aspect in enumerate(table.aspect_ids):
            coords = _pca_2d(table.components[:, k, :])
            for i, cid in enumerate(table.concept_ids):
                row = [aspect, cid, repr(float(coords[i, 0])), repr(float(coords[i, 1]))]
                if labels is not None:
                    pair = labels.get(cid, ("", ""))
                    row += [pair[0], pair[1]]
                writer.writerow(row)

    with open(nn_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["component", "class"] + [f"nn_{i + 1}" for i in range(n_neighbors)]
        )
        for k, aspect in enumerate(table.aspect_ids):
            x = table.components[:, k, :]
            dist = np.linalg.norm(x[:, None, :] - x[None, :, :], axis=2)
            np.fill_diagonal(dist, np.inf)
            for i, cid in enumerate(table.concept_ids):
                order = np.lexsort((np.arange(dist.shape[1]), dist[i]))
                names = [table.concept_ids[j] for j in order[:n_neighbors]]
                writer.writerow([aspect, cid] + names)
    return {"coords": str(coords_path), "neighbors": str(nn_path)}


# ---------------------------------------------------------------------------
# synthetic benchmark datasets (desk scale, fully deterministic)
# ---------------------------------------------------------------------------


def choose_zsl_split(
    labels: dict[str, tuple[int, int]], n_unseen: int
) -> tuple[list[str], list[str]]:
    """First (lexicographic) unseen subset whose factors are all covered by
    the remaining seen classes, with every group seen at least once."""
    class_ids = sorted(labels)
    g1_all = {v[0] for v in labels.values()}
    g2_all = {v[1] for v in labels.values()}
    for unseen in itertools.combinations(class_ids, n_unseen):
        seen = [c for c in class_ids if c not in set(unseen)]
        g1_seen = {labels[c][0] for c in seen}
        g2_seen = {labels[c][1] for c in seen}
        if g1_seen == g1_all and g2_seen == g2_all:
            return seen, list(unseen)
    raise ValidationError("no unseen subset leaves every group covered")


def _write_labels_csv(path: Path, labels: dict[str, tuple[int, int]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class", "factor1", "factor2"])
        for cid in sorted(labels):
            writer.writerow([cid, labels[cid][0], labels[cid][1]])


def read_labels_csv(path: str | Path) -> dict[str, tuple[int, int]]:
    labels: dict[str, tuple[int, int]] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            labels[row["class"]] = (int(row["factor1"]), int(row["factor2"]))
    if not labels:
        raise ParseError(f"{path}: no label rows")
    return labels


def write_synthetic_imgc(
    out_dir: str | Path,
    n_classes: int = 10,
    n_groups: tuple[int, int] = (3, 4),
    n_unseen: int = 4,
    dim: int = 64,
    n_train: int = 50,
    n_test: int = 20,
    noise_sigma: float = 0.1,
    seed: int = 0,
) -> dict[str, str]:
    """Materialize the synthetic imgc benchmark as plain data files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stage = "synth-data"
    ontology, labels = synth_ontology(
        n_classes, n_groups, seed=seed, distinct_combos=True
    )
    seen, unseen = choose_zsl_split(labels, n_unseen)
    train = synth_features(
        labels, dim, n_train, noise_sigma, seed=stage_seed(seed, "train-features")
    ).subset(seen)
    test = synth_features(
        labels, dim, n_test, noise_sigma, seed=stage_seed(seed, "test-features")
    )
    paths = {
        "ontology": out / "ontology.tsv",
        "split": out / "split.txt",
        "features_train": out / "features_train.bin",
        "features_test": out / "features_test.bin",
        "labels": out / "labels.csv",
    }
    for p in paths.values():
        _fresh(stage, p)
    serialize_triples(ontology, paths["ontology"])
    write_split(paths["split"], DatasetSplit("imgc", seen, unseen))
    save_features(paths["features_train"], train)
    save_features(paths["features_test"], test)
    _write_labels_csv(paths["labels"], labels)
    return {k: str(v) for k, v in paths.items()}


def write_synthetic_kgc(
    out_dir: str | Path,
    n_relations: int = 8,
    n_groups: tuple[int, int] = (3, 3),
    n_unseen: int = 2,
    n_entities: int = 20,
    dim: int = 16,
    train_per_relation: int = 24,
    test_per_relation: int = 50,
    valid_per_relation: int = 5,
    seed: int = 0,
) -> dict[str, str]:
    """Materialize a toy kgc benchmark: relations follow factor-structured
    offsets over latent entity points; tails are nearest neighbors of
    head + offset (+ noise)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stage = "synth-data"
    ontology, labels = synth_ontology(
        n_relations, n_groups, seed=seed, distinct_combos=True
    )
    seen, unseen = choose_zsl_split(labels, n_unseen)
    rng = np.random.default_rng([seed, 71])
    points = rng.standard_normal((n_entities, dim)) * 2.0
    entity_ids = [f"ent_{i:02d}" for i in range(n_entities)]
    offsets = {r: factor_mean(labels[r], dim, 1.0) for r in labels}

    taken: set[tuple[str, str, str]] = set()

    def draw(relations: list[str], per_relation: int) -> list[tuple[str, str, str]]:
        triples = []
        for r in relations:
            made = 0
            attempts = 0
            while made < per_relation and attempts < per_relation * 40:
                attempts += 1
                h = int(rng.integers(0, n_entities))
                target = points[h] + offsets[r] + 0.5 * rng.standard_normal(dim)
                dists = np.linalg.norm(points - target, axis=1)
                dists[h] = np.inf
                t = int(dists.argmin())
                trip = (entity_ids[h], r, entity_ids[t])
                if trip in taken:
                    continue
                taken.add(trip)
                triples.append(trip)
                made += 1
            if made < per_relation:
                raise ValidationError(
                    f"could not draw {per_relation} distinct triples for {r!r}"
                )
        return triples

    train = draw(seen, train_per_relation)
    # closed entity set: make sure every entity occurs in training triples
    covered = {e for h, _, t in train for e in (h, t)}
    for i, ent in enumerate(entity_ids):
        if ent not in covered:
            target = points[i] + offsets[seen[0]]
            dists = np.linalg.norm(points - target, axis=1)
            dists[i] = np.inf
            trip = (ent, seen[0], entity_ids[int(dists.argmin())])
            if trip not in taken:
                taken.add(trip)
                train.append(trip)
    valid = draw(unseen, valid_per_relation)
    test = draw(unseen, test_per_relation)

    paths = {
        "ontology": out / "ontology.tsv",
        "split": out / "split.txt",
        "kg_train": out / "kg_train.tsv",
        "kg_valid": out / "kg_valid.tsv",
        "kg_test": out / "kg_test.tsv",
        "labels": out / "labels.csv",
    }
    for p in paths.values():
        _fresh(stage, p)
    serialize_triples(ontology, paths["ontology"])
    for name in ("kg_train", "kg_valid", "kg_test"):
        with open(paths[name], "w", encoding="utf-8") as fh:
            for h, r, t in {"kg_train": train, "kg_valid": valid, "kg_test": test}[name]:
                fh.write(f"{h}\t{r}\t{t}\n")
    write_split(
        paths["split"],
        DatasetSplit("kgc", seen, unseen),
        triple_files={
            "train": "kg_train.tsv",
            "valid": "kg_valid.tsv",
            "test": "kg_test.tsv",
        },
    )
    _write_labels_csv(paths["labels"], labels)
    return {k: str(v) for k, v in paths.items()}


def synthetic_imgc_config(
    paths: dict[str, str], learner: str = "gan", seed: int = 0
) -> ExperimentConfig:
    """Desk-scale config tuned for the synthetic imgc benchmark."""
    return ExperimentConfig(
        task="imgc",
        learner=learner,
        seed=seed,
        data=DataConfig(
            ontology=paths["ontology"],
            split=paths["split"],
            features_train=paths["features_train"],
            features_test=paths["features_test"],
        ),
        encoder=EncoderConfig(
            k_score=2, d=16, epochs=300, learning_rate=0.01, optimizer="adam"
        ),
        gan=gan_mod.GanConfig(
            noise_dim=32, hidden_g=256, hidden_d=256, learning_rate=0.001,
            epochs=200, n_synth_per_class=200,
        ),
        gcn=gcn_mod.GcnConfig(
            tau=0.95, hidden_dim=64, learning_rate=0.01, epochs=400
        ),
    )


def synthetic_kgc_config(
    paths: dict[str, str], learner: str = "gan", seed: int = 0
) -> ExperimentConfig:
    """Desk-scale config tuned for the synthetic kgc benchmark."""
    return ExperimentConfig(
        task="kgc",
        learner=learner,
        seed=seed,
        data=DataConfig(ontology=paths["ontology"], split=paths["split"]),
        encoder=EncoderConfig(
            k_score=2, d=16, epochs=300, learning_rate=0.01, optimizer="adam"
        ),
        gan=gan_mod.GanConfig(
            noise_dim=8, hidden_g=64, hidden_d=64, learning_rate=0.001,
            epochs=150, n_synth_per_class=200,
        ),
        gcn=gcn_mod.GcnConfig(
            tau=0.95, hidden_dim=32, learning_rate=0.01, epochs=400
        ),
        transe=TransEConfig(d=16, learning_rate=0.05, epochs=300, batch_size=128),
    )
