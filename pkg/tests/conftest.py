import numpy as np
import pytest
from hypothesis import settings

from facetzsl.ontology import (
    Concept,
    Ontology,
    OntologyTriple,
    Property,
    synth_ontology,
)

# torch's first dispatch of an op can blow hypothesis' default deadline
settings.register_profile("package", deadline=None)
settings.load_profile("package")


def make_ontology(triples, aspects=None):
    """Ontology from (head_id, prop_id, tail_id) string triples."""
    concept_idx, prop_idx, out = {}, {}, []
    for h, p, t in triples:
        for cid in (h, t):
            concept_idx.setdefault(cid, len(concept_idx))
        prop_idx.setdefault(p, len(prop_idx))
        out.append(OntologyTriple(concept_idx[h], prop_idx[p], concept_idx[t]))
    onto = Ontology(
        concepts=[Concept(c, i) for c, i in concept_idx.items()],
        properties=[Property(p, i) for p, i in prop_idx.items()],
        triples=out,
        aspect_properties=list(prop_idx) if aspects is None else list(aspects),
    )
    onto.validate()
    return onto


@pytest.fixture
def chain_ontology():
    """a -r-> b -r-> c, the smallest graph with a non-trivial neighborhood."""
    return make_ontology([("a", "r", "b"), ("b", "r", "c")])


@pytest.fixture
def two_aspect_ontology():
    return make_ontology(
        [
            ("a", "r1", "b"),
            ("b", "r1", "c"),
            ("a", "r2", "d"),
            ("c", "r2", "d"),
        ]
    )


@pytest.fixture(scope="session")
def labelled_ontology():
    """The 12-class / (3, 4)-group synthetic ontology with factor labels."""
    return synth_ontology(12, (3, 4), seed=0)


def rng_array(shape, seed=0, scale=1.0):
    return scale * np.random.default_rng(seed).standard_normal(shape)
