"""Ontology data model: parsing, validation, augmentation and desk-scale synthesis.

An ontology here is a set of *concepts* (classes, relations, attribute nodes,
taxonomy nodes, ...) linked by directed *property* edges.  The on-disk format
is a three-column TSV, one ``head<TAB>property<TAB>tail`` triple per line,
optionally preceded by header lines of the form::

    @aspect <property-id>

Each ``@aspect`` line nominates one property as a *scoring aspect*; the order
of these headers fixes the component order of every embedding table derived
from the file.  When no ``@aspect`` header is present, every property becomes
an aspect in first-appearance order.

Before embedding, an ontology is *augmented*: every property gains an inverse
(``p#inv``, edges reversed) and a single shared self property (``#self``) is
appended.  Self pairs ``(i, #self)`` never materialise as triples; they only
appear in the neighborhood index so that every concept attends to itself.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

SELF_PROPERTY_ID = "#self"
INVERSE_SUFFIX = "#inv"

KIND_ORIGINAL = "original"
KIND_INVERSE = "inverse"
KIND_SELF = "self"


class ParseError(ValueError):
    """An input file could not be parsed."""


class ValidationError(ValueError):
    """Parsed data violates a structural invariant."""


@dataclass(frozen=True)
class Concept:
    id: str
    index: int


@dataclass(frozen=True)
class Property:
    id: str
    index: int
    kind: str = KIND_ORIGINAL
    # for kind == "inverse": index of the original property this one reverses
    origin: int | None = None


@dataclass(frozen=True)
class OntologyTriple:
    head: int
    property: int
    tail: int


@dataclass
class Ontology:
    """Concepts + properties + directed triples, all index-addressed.

    ``aspect_properties`` lists the ids of the scoring-aspect properties in
    the order they were declared; this order is load-bearing everywhere
    downstream (component k of an embedding belongs to aspect k).
    """

    concepts: list[Concept]
    properties: list[Property]
    triples: list[OntologyTriple]
    aspect_properties: list[str]

    _concept_idx: dict[str, int] = field(init=False, repr=False)
    _property_idx: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self._concept_idx = {c.id: c.index for c in self.concepts}
        self._property_idx = {p.id: p.index for p in self.properties}

    @property
    def n_concepts(self) -> int:
        return len(self.concepts)

    @property
    def n_properties(self) -> int:
        return len(self.properties)

    def concept_index(self, concept_id: str) -> int:
        try:
            return self._concept_idx[concept_id]
        except KeyError:
            raise ValidationError(f"unknown concept id: {concept_id!r}") from None

    def property_index(self, property_id: str) -> int:
        try:
            return self._property_idx[property_id]
        except KeyError:
            raise ValidationError(f"unknown property id: {property_id!r}") from None

    def has_concept(self, concept_id: str) -> bool:
        return concept_id in self._concept_idx

    @property
    def is_augmented(self) -> bool:
        return any(p.kind == KIND_SELF for p in self.properties)

    def original_properties(self) -> list[Property]:
        return [p for p in self.properties if p.kind == KIND_ORIGINAL]

    def original_triples(self) -> list[OntologyTriple]:
        """Triples whose property is an original (non-derived) one."""
        kinds = [p.kind for p in self.properties]
        return [t for t in self.triples if kinds[t.property] == KIND_ORIGINAL]

    def triple_array(self) -> np.ndarray:
        """All triples as an (n, 3) int64 array of (head, property, tail)."""
        if not self.triples:
            return np.zeros((0, 3), dtype=np.int64)
        return np.asarray(
            [(t.head, t.property, t.tail) for t in self.triples], dtype=np.int64
        )

    def validate(self) -> None:
        ids = [c.id for c in self.concepts]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate concept ids")
        pids = [p.id for p in self.properties]
        if len(set(pids)) != len(pids):
            raise ValidationError("duplicate property ids")
        for i, c in enumerate(self.concepts):
            if c.index != i:
                raise ValidationError(f"concept index gap at {c.id!r}")
        for i, p in enumerate(self.properties):
            if p.index != i:
                raise ValidationError(f"property index gap at {p.id!r}")
        seen = set()
        for t in self.triples:
            if not (0 <= t.head < self.n_concepts and 0 <= t.tail < self.n_concepts):
                raise ValidationError(f"triple references unknown concept: {t}")
            if not 0 <= t.property < self.n_properties:
                raise ValidationError(f"triple references unknown property: {t}")
            key = (t.head, t.property, t.tail)
            if key in seen:
                raise ValidationError(f"duplicate triple: {t}")
            seen.add(key)
        if not self.aspect_properties:
            raise ValidationError("ontology declares no aspect properties")
        if len(set(self.aspect_properties)) != len(self.aspect_properties):
            raise ValidationError("duplicate aspect property")
        original_ids = {p.id for p in self.original_properties()}
        for a in self.aspect_properties:
            if a not in original_ids:
                raise ValidationError(
                    f"aspect property {a!r} does not occur in any triple"
                )


def parse_triples(path: str | Path) -> Ontology:
    """Read a triple TSV (with optional ``@aspect`` headers) into an Ontology.

    Duplicate triples are dropped silently; indices are dense and assigned in
    first-appearance order (head before tail within a line).  Malformed lines
    raise :class:`ParseError` with a line number.
    """
    path = Path(path)
    aspects: list[str] = []
    raw_triples: list[tuple[str, str, str]] = []
    seen_triples: set[tuple[str, str, str]] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            if line.startswith("@aspect"):
                parts = line.split()
                if len(parts) != 2:
                    raise ParseError(
                        f"{path.name}:{lineno}: expected '@aspect <property-id>'"
                    )
                if parts[1] in aspects:
                    raise ValidationError(
                        f"{path.name}:{lineno}: duplicate aspect {parts[1]!r}"
                    )
                aspects.append(parts[1])
                continue
            parts = line.split("\t")
            if len(parts) != 3 or not all(p.strip() for p in parts):
                raise ParseError(
                    f"{path.name}:{lineno}: expected 3 non-empty tab-separated "
                    f"fields, got {len(parts)}"
                )
            key = (parts[0], parts[1], parts[2])
            if key in seen_triples:
                continue
            seen_triples.add(key)
            raw_triples.append(key)

    concept_idx: dict[str, int] = {}
    property_idx: dict[str, int] = {}
    triples: list[OntologyTriple] = []
    for h, p, t in raw_triples:
        for cid in (h, t):
            if cid not in concept_idx:
                concept_idx[cid] = len(concept_idx)
        if p not in property_idx:
            property_idx[p] = len(property_idx)
        triples.append(
            OntologyTriple(concept_idx[h], property_idx[p], concept_idx[t])
        )

    if not aspects:
        aspects = list(property_idx)

    onto = Ontology(
        concepts=[Concept(cid, i) for cid, i in concept_idx.items()],
        properties=[Property(pid, i) for pid, i in property_idx.items()],
        triples=triples,
        aspect_properties=aspects,
    )
    onto.validate()
    return onto


def serialize_triples(ontology: Ontology, path: str | Path) -> None:
    """Write an (unaugmented) ontology back to the triple TSV format."""
    if ontology.is_augmented:
        raise ValidationError("serialize_triples expects an unaugmented ontology")
    path = Path(path)
    cid = [c.id for c in ontology.concepts]
    pid = [p.id for p in ontology.properties]
    with open(path, "w", encoding="utf-8") as fh:
        for a in ontology.aspect_properties:
            fh.write(f"@aspect {a}\n")
        for t in ontology.triples:
            fh.write(f"{cid[t.head]}\t{pid[t.property]}\t{cid[t.tail]}\n")


def augment_ontology(ontology: Ontology) -> tuple[Ontology, int]:
    """Add inverse properties/triples plus one self property.

    Returns the augmented ontology and the total property count
    ``K_agg = 2 * n_original + 1``.  Original properties keep their indices;
    the inverse of property ``i`` sits at ``n_original + i`` and the self
    property last.  Augmenting twice is an error.
    """
    if ontology.is_augmented:
        raise ValidationError("ontology is already augmented")
    n_orig = ontology.n_properties
    if n_orig == 0:
        raise ValidationError("cannot augment an ontology with no properties")
    for p in ontology.properties:
        if p.id.endswith(INVERSE_SUFFIX) or p.id == SELF_PROPERTY_ID:
            raise ValidationError(f"reserved property id in input: {p.id!r}")

    properties = list(ontology.properties)
    for p in ontology.properties:
        properties.append(
            Property(p.id + INVERSE_SUFFIX, n_orig + p.index, KIND_INVERSE, p.index)
        )
    properties.append(Property(SELF_PROPERTY_ID, 2 * n_orig, KIND_SELF))

    triples = list(ontology.triples)
    for t in ontology.triples:
        triples.append(OntologyTriple(t.tail, n_orig + t.property, t.head))

    augmented = Ontology(
        concepts=ontology.concepts,
        properties=properties,
        triples=triples,
        aspect_properties=list(ontology.aspect_properties),
    )
    augmented.validate()
    return augmented, 2 * n_orig + 1


@dataclass
class NeighborhoodIndex:
    """Per-concept list of (neighbor, property) pairs over the augmented graph.

    ``entries[i]`` holds every ``(j, p)`` with ``(i, p, j)`` an augmented
    triple, plus the self pair ``(i, self_property)``, sorted by
    (neighbor index, property index).
    """

    entries: list[list[tuple[int, int]]]
    self_property: int


def build_neighborhood_index(augmented: Ontology) -> NeighborhoodIndex:
    if not augmented.is_augmented:
        raise ValidationError("neighborhood index requires an augmented ontology")
    self_idx = next(p.index for p in augmented.properties if p.kind == KIND_SELF)
    entries: list[list[tuple[int, int]]] = [[] for _ in range(augmented.n_concepts)]
    for t in augmented.triples:
        entries[t.head].append((t.tail, t.property))
    for i in range(augmented.n_concepts):
        entries[i].append((i, self_idx))
        entries[i].sort()
    return NeighborhoodIndex(entries=entries, self_property=self_idx)


def neighborhood(index: NeighborhoodIndex, concept: int) -> list[tuple[int, int]]:
    if not 0 <= concept < len(index.entries):
        raise IndexError(f"concept index {concept} out of range")
    return index.entries[concept]


# ---------------------------------------------------------------------------
# synthetic ontology with two known generative factors
# ---------------------------------------------------------------------------

TAXONOMY_PROPERTY = "subclass_of"
ATTRIBUTE_PROPERTY = "has_attribute"


def synth_ontology(
    n_classes: int,
    n_groups: tuple[int, int],
    seed: int,
    attr_nodes_per_group: int = 2,
    distinct_combos: bool = False,
) -> tuple[Ontology, dict[str, tuple[int, int]]]:
    """Build a two-aspect ontology whose generative factors are known.

    Aspect 1 (``subclass_of``) links each class to one taxonomy node; aspect 2
    (``has_attribute``) links it to every attribute node of its trait group.
    By default the two factors are sampled independently (so one factor
    carries no information about the other); ``distinct_combos=True`` instead
    makes every (factor1, factor2) pair unique, which keeps classes separable
    when features are later generated from the factors.  Either way every
    group is covered on both aspects.  Returns the ontology and
    ``{class_id: (factor1, factor2)}`` ground-truth labels.
    """
    g1, g2 = n_groups
    if g1 < 1 or g2 < 1:
        raise ValidationError("group counts must be positive")
    if n_classes < max(g1, g2):
        raise ValidationError(
            f"need at least max(n_groups)={max(g1, g2)} classes to cover "
            f"every group, got {n_classes}"
        )
    if attr_nodes_per_group < 1:
        raise ValidationError("attr_nodes_per_group must be positive")

    rng = np.random.default_rng(seed)
    if distinct_combos:
        if n_classes > g1 * g2:
            raise ValidationError(
                f"cannot pick {n_classes} distinct combos from a "
                f"{g1}x{g2} factor grid"
            )
        perm1 = rng.permutation(g1)
        perm2 = rng.permutation(g2)
        # one combo per i covers every group on both sides; the longer
        # permutation makes the pairs pairwise distinct
        base = [
            (int(perm1[i % g1]), int(perm2[i % g2])) for i in range(max(g1, g2))
        ]
        rest = [
            (a, b) for a in range(g1) for b in range(g2) if (a, b) not in set(base)
        ]
        rest_order = rng.permutation(len(rest))
        combos = (base + [rest[i] for i in rest_order])[:n_classes]
        order = rng.permutation(n_classes)
        combos = [combos[i] for i in order]
    else:
        # cover every group, pad with uniform draws, then shuffle each factor
        # on its own so the two stay independent
        def factor_column(g: int) -> list[int]:
            values = list(rng.permutation(g))
            values += list(rng.integers(0, g, size=n_classes - g))
            order = rng.permutation(n_classes)
            return [int(values[i]) for i in order]

        combos = list(zip(factor_column(g1), factor_column(g2)))

    width = max(2, len(str(n_classes - 1)))
    class_ids = [f"class_{i:0{width}d}" for i in range(n_classes)]
    tax_ids = [f"taxon_{a}" for a in range(g1)]
    attr_ids = [
        f"trait_{b}_{j}" for b in range(g2) for j in range(attr_nodes_per_group)
    ]

    concept_ids = class_ids + tax_ids + attr_ids
    concepts = [Concept(cid, i) for i, cid in enumerate(concept_ids)]
    properties = [Property(TAXONOMY_PROPERTY, 0), Property(ATTRIBUTE_PROPERTY, 1)]

    tax_base = n_classes
    attr_base = n_classes + g1
    triples: list[OntologyTriple] = []
    for ci, (a, _) in enumerate(combos):
        triples.append(OntologyTriple(ci, 0, tax_base + a))
    for ci, (_, b) in enumerate(combos):
        for j in range(attr_nodes_per_group):
            triples.append(
                OntologyTriple(ci, 1, attr_base + b * attr_nodes_per_group + j)
            )

    onto = Ontology(
        concepts=concepts,
        properties=properties,
        triples=triples,
        aspect_properties=[TAXONOMY_PROPERTY, ATTRIBUTE_PROPERTY],
    )
    onto.validate()
    labels = {class_ids[i]: combos[i] for i in range(n_classes)}
    return onto, labels


# ---------------------------------------------------------------------------
# dataset splits
# ---------------------------------------------------------------------------

TASK_IMGC = "imgc"
TASK_KGC = "kgc"


@dataclass
class DatasetSplit:
    """Seen/unseen class split, plus instance-KG triple sets for kgc tasks.

    ``entities`` lists kgc entities in training-triple appearance order; it is
    None for imgc splits.
    """

    task_kind: str
    seen_classes: list[str]
    unseen_classes: list[str]
    kgc_train: list[tuple[str, str, str]] | None = None
    kgc_valid: list[tuple[str, str, str]] | None = None
    kgc_test: list[tuple[str, str, str]] | None = None
    entities: list[str] | None = None

    @property
    def all_classes(self) -> list[str]:
        return self.seen_classes + self.unseen_classes


def read_kg_triples(path: str | Path) -> list[tuple[str, str, str]]:
    """Read an instance-KG triple TSV (head, relation, tail); dedupes."""
    path = Path(path)
    out: list[tuple[str, str, str]] = []
    seen: set[tuple[str, str, str]] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3 or not all(p.strip() for p in parts):
                raise ParseError(
                    f"{path.name}:{lineno}: expected 3 non-empty tab-separated fields"
                )
            key = (parts[0], parts[1], parts[2])
            if key not in seen:
                seen.add(key)
                out.append(key)
    return out


def load_split(path: str | Path, ontology: Ontology) -> DatasetSplit:
    """Load a split file and validate it against the ontology.

    Format: one ``tag<TAB>value`` pair per line.  Tags: ``task`` (imgc|kgc),
    ``seen``/``unseen`` (one class id each), and for kgc
    ``triples_train``/``triples_valid``/``triples_test`` (paths relative to
    the split file).
    """
    path = Path(path)
    task: str | None = None
    seen_classes: list[str] = []
    unseen_classes: list[str] = []
    triple_paths: dict[str, Path] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(
                    f"{path.name}:{lineno}: expected 'tag<TAB>value'"
                )
            tag, value = parts
            if tag == "task":
                if value not in (TASK_IMGC, TASK_KGC):
                    raise ParseError(
                        f"{path.name}:{lineno}: unknown task kind {value!r}"
                    )
                task = value
            elif tag == "seen":
                seen_classes.append(value)
            elif tag == "unseen":
                unseen_classes.append(value)
            elif tag in ("triples_train", "triples_valid", "triples_test"):
                triple_paths[tag.removeprefix("triples_")] = path.parent / value
            else:
                raise ParseError(f"{path.name}:{lineno}: unknown tag {tag!r}")

    if task is None:
        raise ParseError(f"{path.name}: missing 'task' line")
    if not seen_classes or not unseen_classes:
        raise ValidationError(f"{path.name}: both seen and unseen classes required")
    for lst, name in ((seen_classes, "seen"), (unseen_classes, "unseen")):
        if len(set(lst)) != len(lst):
            raise ValidationError(f"{path.name}: duplicate {name} class id")
    overlap = set(seen_classes) & set(unseen_classes)
    if overlap:
        raise ValidationError(
            f"{path.name}: classes in both seen and unseen: {sorted(overlap)}"
        )
    for cid in seen_classes + unseen_classes:
        if not ontology.has_concept(cid):
            raise ValidationError(
                f"{path.name}: class {cid!r} is not an ontology concept"
            )

    if task == TASK_IMGC:
        if triple_paths:
            raise ValidationError(f"{path.name}: imgc split does not take triple files")
        return DatasetSplit(task, seen_classes, unseen_classes)

    for part in ("train", "test"):
        if part not in triple_paths:
            raise ValidationError(f"{path.name}: kgc split missing triples_{part}")
    kg = {part: read_kg_triples(p) for part, p in triple_paths.items()}
    kg.setdefault("valid", [])

    seen_set, unseen_set = set(seen_classes), set(unseen_classes)
    entities: list[str] = []
    entity_set: set[str] = set()
    for h, r, t in kg["train"]:
        if r not in seen_set:
            raise ValidationError(f"training triple uses non-seen relation {r!r}")
        for e in (h, t):
            if e not in entity_set:
                entity_set.add(e)
                entities.append(e)
    for part in ("valid", "test"):
        for h, r, t in kg[part]:
            if h not in entity_set or t not in entity_set:
                raise ValidationError(
                    f"{part} triple ({h!r}, {r!r}, {t!r}) uses an entity absent "
                    f"from training triples"
                )
            if not ontology.has_concept(r):
                raise ValidationError(f"relation {r!r} is not an ontology concept")
    for h, r, t in kg["test"]:
        if r not in unseen_set:
            raise ValidationError(f"test triple uses non-unseen relation {r!r}")

    return DatasetSplit(
        task,
        seen_classes,
        unseen_classes,
        kgc_train=kg["train"],
        kgc_valid=kg["valid"],
        kgc_test=kg["test"],
        entities=entities,
    )


def write_split(
    path: str | Path,
    split: DatasetSplit,
    triple_files: dict[str, str] | None = None,
) -> None:
    """Write a split file; ``triple_files`` maps train/valid/test to relpaths."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"task\t{split.task_kind}\n")
        for cid in split.seen_classes:
            fh.write(f"seen\t{cid}\n")
        for cid in split.unseen_classes:
            fh.write(f"unseen\t{cid}\n")
        for part, rel in (triple_files or {}).items():
            fh.write(f"triples_{part}\t{rel}\n")
