"""Triple parsing, augmentation, neighborhoods, synthetic ontologies, splits."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_ontology
from facetzsl.ontology import (
    ATTRIBUTE_PROPERTY,
    TAXONOMY_PROPERTY,
    Concept,
    DatasetSplit,
    Ontology,
    ParseError,
    ValidationError,
    augment_ontology,
    build_neighborhood_index,
    load_split,
    neighborhood,
    parse_triples,
    read_kg_triples,
    serialize_triples,
    synth_ontology,
    write_split,
)

triple_lists = st.lists(
    st.tuples(
        st.sampled_from([f"c{i}" for i in range(6)]),
        st.sampled_from(["p0", "p1", "p2"]),
        st.sampled_from([f"c{i}" for i in range(6)]),
    ),
    min_size=1,
    max_size=15,
    unique=True,
)


class TestParseTriples:
    def test_three_distinct_lines(self, tmp_path):
        path = tmp_path / "o.tsv"
        path.write_text("a\tr\tb\nb\tr\tc\na\ts\tc\n")
        onto = parse_triples(path)
        assert len(onto.triples) == 3
        assert [c.id for c in onto.concepts] == ["a", "b", "c"]
        assert [p.id for p in onto.properties] == ["r", "s"]
        # no @aspect headers -> every property is an aspect
        assert onto.aspect_properties == ["r", "s"]

    def test_duplicate_line_dropped(self, tmp_path):
        path = tmp_path / "o.tsv"
        path.write_text("a\tr\tb\na\tr\tb\n")
        assert len(parse_triples(path).triples) == 1

    def test_aspect_headers(self, tmp_path):
        path = tmp_path / "o.tsv"
        path.write_text("@aspect s\na\tr\tb\na\ts\tb\n")
        assert parse_triples(path).aspect_properties == ["s"]

    def test_duplicate_aspect_rejected(self, tmp_path):
        path = tmp_path / "o.tsv"
        path.write_text("@aspect r\n@aspect r\na\tr\tb\n")
        with pytest.raises(ValidationError, match="duplicate aspect"):
            parse_triples(path)

    def test_aspect_for_unused_property_rejected(self, tmp_path):
        path = tmp_path / "o.tsv"
        path.write_text("@aspect ghost\na\tr\tb\n")
        with pytest.raises(ValidationError):
            parse_triples(path)

    @pytest.mark.parametrize(
        "bad", ["a\tb\n", "a b c\n", "a\t\tb\n", "@aspect\n", "@aspect r s\n"]
    )
    def test_malformed_lines(self, tmp_path, bad):
        path = tmp_path / "o.tsv"
        path.write_text("a\tr\tb\n" + bad)
        with pytest.raises(ParseError, match=":2"):
            parse_triples(path)

    def test_first_appearance_indexing(self, tmp_path):
        path = tmp_path / "o.tsv"
        path.write_text("x\tr\ty\nz\ts\tx\n")
        onto = parse_triples(path)
        assert onto.concept_index("x") == 0
        assert onto.concept_index("y") == 1
        assert onto.concept_index("z") == 2

    def test_round_trip_identity(self, tmp_path):
        src = tmp_path / "a.tsv"
        src.write_text("@aspect r\nx\tr\ty\ny\ts\tz\nx\tr\tz\n")
        first = parse_triples(src)
        back = tmp_path / "b.tsv"
        serialize_triples(first, back)
        second = parse_triples(back)
        assert [c.id for c in first.concepts] == [c.id for c in second.concepts]
        assert [p.id for p in first.properties] == [p.id for p in second.properties]
        assert first.triples == second.triples
        assert first.aspect_properties == second.aspect_properties

    @given(triples=triple_lists)
    @settings(max_examples=30)
    def test_round_trip_any_ontology(self, triples, tmp_path_factory):
        onto = make_ontology(triples)
        path = tmp_path_factory.mktemp("rt") / "o.tsv"
        serialize_triples(onto, path)
        again = parse_triples(path)
        assert again.triples == onto.triples
        assert [c.id for c in again.concepts] == [c.id for c in onto.concepts]

    def test_serialize_refuses_augmented(self, tmp_path):
        onto = make_ontology([("a", "r", "b")])
        aug, _ = augment_ontology(onto)
        with pytest.raises(ValidationError):
            serialize_triples(aug, tmp_path / "x.tsv")


class TestAugmentation:
    def test_doubles_triples_and_counts_components(self):
        onto = make_ontology([("a", "r", "b"), ("b", "s", "c"), ("a", "s", "c")])
        aug, k = augment_ontology(onto)
        assert len(aug.triples) == 6
        assert k == 5  # 2 originals + 2 inverses + self

    def test_component_count_two_and_four_properties(self):
        two = make_ontology([("a", "r", "b"), ("a", "s", "b")])
        assert augment_ontology(two)[1] == 5
        four = make_ontology(
            [("a", "p0", "b"), ("a", "p1", "b"), ("a", "p2", "b"), ("a", "p3", "b")]
        )
        assert augment_ontology(four)[1] == 9

    def test_inverse_triples_swap_and_offset(self):
        onto = make_ontology([("a", "r", "b")])
        aug, _ = augment_ontology(onto)
        orig, inv = aug.triples
        assert (inv.head, inv.tail) == (orig.tail, orig.head)
        assert inv.property == onto.n_properties + orig.property
        assert aug.properties[inv.property].id == "r#inv"
        assert aug.properties[inv.property].origin == orig.property

    def test_no_properties_is_error(self):
        onto = Ontology(
            concepts=[Concept("a", 0)], properties=[], triples=[],
            aspect_properties=[],
        )
        with pytest.raises(ValidationError, match="no properties"):
            augment_ontology(onto)

    def test_double_augmentation_rejected(self):
        aug, _ = augment_ontology(make_ontology([("a", "r", "b")]))
        with pytest.raises(ValidationError, match="already augmented"):
            augment_ontology(aug)

    @pytest.mark.parametrize("bad_id", ["r#inv", "#self"])
    def test_reserved_property_ids_rejected(self, bad_id):
        onto = make_ontology([("a", bad_id, "b")])
        with pytest.raises(ValidationError, match="reserved"):
            augment_ontology(onto)

    def test_originals_keep_indices(self):
        onto = make_ontology([("a", "r", "b"), ("a", "s", "b")])
        aug, _ = augment_ontology(onto)
        for p in onto.properties:
            assert aug.properties[p.index].id == p.id

    @given(triples=triple_lists)
    @settings(max_examples=30)
    def test_exactly_doubles_any_ontology(self, triples):
        onto = make_ontology(triples)
        aug, k = augment_ontology(onto)
        assert len(aug.triples) == 2 * len(onto.triples)
        assert k == 2 * onto.n_properties + 1
        assert len(aug.properties) == k


class TestNeighborhood:
    def test_isolated_concept_self_only(self):
        onto = make_ontology([("a", "r", "b")])
        onto.concepts.append(Concept("lone", 2))
        aug, _ = augment_ontology(onto)
        index = build_neighborhood_index(aug)
        assert neighborhood(index, 2) == [(2, index.self_property)]

    def test_single_triple_inverse_contract(self):
        aug, _ = augment_ontology(make_ontology([("a", "r", "b")]))
        index = build_neighborhood_index(aug)
        a, b = 0, 1
        assert set(neighborhood(index, a)) == {(b, 0), (a, index.self_property)}
        assert (a, 1) in neighborhood(index, b)  # r#inv sits at offset 1

    def test_star_center_has_five_entries(self):
        aug, _ = augment_ontology(
            make_ontology([("hub", "r", f"leaf{i}") for i in range(4)])
        )
        index = build_neighborhood_index(aug)
        assert len(neighborhood(index, 0)) == 5

    def test_entries_sorted(self):
        aug, _ = augment_ontology(
            make_ontology([("a", "r", "c"), ("a", "s", "b"), ("b", "r", "a")])
        )
        index = build_neighborhood_index(aug)
        for entries in index.entries:
            assert entries == sorted(entries)

    def test_out_of_range(self):
        aug, _ = augment_ontology(make_ontology([("a", "r", "b")]))
        index = build_neighborhood_index(aug)
        with pytest.raises(IndexError):
            neighborhood(index, 2)

    def test_requires_augmented(self):
        with pytest.raises(ValidationError):
            build_neighborhood_index(make_ontology([("a", "r", "b")]))

    @given(triples=triple_lists)
    @settings(max_examples=30)
    def test_size_is_degree_plus_one(self, triples):
        onto = make_ontology(triples)
        aug, _ = augment_ontology(onto)
        index = build_neighborhood_index(aug)
        in_deg = np.zeros(onto.n_concepts, dtype=int)
        out_deg = np.zeros(onto.n_concepts, dtype=int)
        for t in onto.triples:
            out_deg[t.head] += 1
            in_deg[t.tail] += 1
        for c in range(onto.n_concepts):
            assert len(neighborhood(index, c)) == in_deg[c] + out_deg[c] + 1


class TestSynthOntology:
    def test_structure_and_label_partitions(self):
        onto, labels = synth_ontology(12, (3, 4), seed=0)
        tax = [t for t in onto.triples if t.property == 0]
        attr = [t for t in onto.triples if t.property == 1]
        assert len(tax) == 12
        assert len(attr) >= 12
        assert len(labels) == 12
        assert {pair[0] for pair in labels.values()} == {0, 1, 2}
        assert {pair[1] for pair in labels.values()} == {0, 1, 2, 3}
        assert onto.aspect_properties == [TAXONOMY_PROPERTY, ATTRIBUTE_PROPERTY]

    def test_deterministic(self):
        a = synth_ontology(12, (3, 4), seed=7)
        b = synth_ontology(12, (3, 4), seed=7)
        assert a[0].triples == b[0].triples
        assert a[1] == b[1]

    def test_seed_changes_assignment(self):
        _, la = synth_ontology(12, (3, 4), seed=0)
        _, lb = synth_ontology(12, (3, 4), seed=1)
        assert la != lb

    def test_too_few_classes(self):
        with pytest.raises(ValidationError):
            synth_ontology(2, (3, 3), seed=0)

    def test_labels_recoverable_from_triples(self):
        """The triples alone determine the factor labels (consistency)."""
        onto, labels = synth_ontology(10, (3, 4), seed=3)
        ids = [c.id for c in onto.concepts]
        for t in onto.triples:
            head = ids[t.head]
            if head not in labels:
                continue
            if t.property == 0:
                assert ids[t.tail] == f"taxon_{labels[head][0]}"
            else:
                assert ids[t.tail].startswith(f"trait_{labels[head][1]}_")

    def test_distinct_combos_unique(self):
        _, labels = synth_ontology(10, (3, 4), seed=0, distinct_combos=True)
        pairs = list(labels.values())
        assert len(set(pairs)) == len(pairs)

    def test_distinct_combos_capacity(self):
        with pytest.raises(ValidationError):
            synth_ontology(13, (3, 4), seed=0, distinct_combos=True)

    @given(seed=st.integers(0, 200))
    @settings(max_examples=30)
    def test_every_group_covered(self, seed):
        _, labels = synth_ontology(8, (3, 4), seed=seed)
        assert {p[0] for p in labels.values()} == {0, 1, 2}
        assert {p[1] for p in labels.values()} == {0, 1, 2, 3}


class TestSplits:
    def _ontology(self, n):
        return make_ontology([(f"class{i}", "r", "root") for i in range(n)])

    def test_imgc_round_trip_fifty_classes(self, tmp_path):
        onto = self._ontology(50)
        seen = [f"class{i}" for i in range(40)]
        unseen = [f"class{i}" for i in range(40, 50)]
        path = tmp_path / "split.txt"
        write_split(path, DatasetSplit("imgc", seen, unseen))
        split = load_split(path, onto)
        assert split.task_kind == "imgc"
        assert len(split.seen_classes) + len(split.unseen_classes) == 50
        assert split.all_classes == seen + unseen

    def test_overlap_rejected(self, tmp_path):
        onto = self._ontology(3)
        path = tmp_path / "s.txt"
        write_split(path, DatasetSplit("imgc", ["class0", "class1"], ["class1"]))
        with pytest.raises(ValidationError, match="both seen and unseen"):
            load_split(path, onto)

    def test_duplicate_rejected(self, tmp_path):
        onto = self._ontology(3)
        path = tmp_path / "s.txt"
        path.write_text("task\timgc\nseen\tclass0\nseen\tclass0\nunseen\tclass1\n")
        with pytest.raises(ValidationError, match="duplicate"):
            load_split(path, onto)

    def test_unknown_class_rejected(self, tmp_path):
        onto = self._ontology(2)
        path = tmp_path / "s.txt"
        write_split(path, DatasetSplit("imgc", ["class0"], ["who"]))
        with pytest.raises(ValidationError, match="not an ontology concept"):
            load_split(path, onto)

    def test_missing_task_line(self, tmp_path):
        path = tmp_path / "s.txt"
        path.write_text("seen\tclass0\nunseen\tclass1\n")
        with pytest.raises(ParseError, match="task"):
            load_split(path, self._ontology(2))

    def test_unknown_tag(self, tmp_path):
        path = tmp_path / "s.txt"
        path.write_text("task\timgc\nbogus\tx\n")
        with pytest.raises(ParseError, match="unknown tag"):
            load_split(path, self._ontology(2))

    def test_imgc_rejects_triple_files(self, tmp_path):
        path = tmp_path / "s.txt"
        write_split(
            path,
            DatasetSplit("imgc", ["class0"], ["class1"]),
            triple_files={"train": "kg.tsv"},
        )
        with pytest.raises(ValidationError, match="triple files"):
            load_split(path, self._ontology(2))

    def _write_kgc(self, tmp_path, train, test, valid=None):
        onto = self._ontology(4)
        (tmp_path / "train.tsv").write_text(
            "".join(f"{h}\t{r}\t{t}\n" for h, r, t in train)
        )
        (tmp_path / "test.tsv").write_text(
            "".join(f"{h}\t{r}\t{t}\n" for h, r, t in test)
        )
        files = {"train": "train.tsv", "test": "test.tsv"}
        if valid is not None:
            (tmp_path / "valid.tsv").write_text(
                "".join(f"{h}\t{r}\t{t}\n" for h, r, t in valid)
            )
            files["valid"] = "valid.tsv"
        path = tmp_path / "split.txt"
        write_split(
            path,
            DatasetSplit("kgc", ["class0", "class1"], ["class2", "class3"]),
            triple_files=files,
        )
        return path, onto

    def test_kgc_round_trip(self, tmp_path):
        train = [("e1", "class0", "e2"), ("e2", "class1", "e3")]
        test = [("e1", "class2", "e3")]
        path, onto = self._write_kgc(tmp_path, train, test, valid=[])
        split = load_split(path, onto)
        assert split.kgc_train == train
        assert split.kgc_test == test
        assert split.entities == ["e1", "e2", "e3"]  # appearance order

    def test_kgc_requires_train_and_test(self, tmp_path):
        onto = self._ontology(4)
        path = tmp_path / "s.txt"
        write_split(
            path, DatasetSplit("kgc", ["class0"], ["class2"]),
        )
        with pytest.raises(ValidationError, match="missing triples"):
            load_split(path, onto)

    def test_kgc_test_only_entity_rejected(self, tmp_path):
        train = [("e1", "class0", "e2")]
        test = [("e1", "class2", "ghost")]
        path, onto = self._write_kgc(tmp_path, train, test)
        with pytest.raises(ValidationError, match="absent from training"):
            load_split(path, onto)

    def test_kgc_train_relation_must_be_seen(self, tmp_path):
        train = [("e1", "class2", "e2")]
        test = [("e1", "class2", "e2")]
        path, onto = self._write_kgc(tmp_path, train, test)
        with pytest.raises(ValidationError, match="non-seen relation"):
            load_split(path, onto)

    def test_kgc_test_relation_must_be_unseen(self, tmp_path):
        train = [("e1", "class0", "e2")]
        test = [("e1", "class0", "e2")]
        path, onto = self._write_kgc(tmp_path, train, test)
        with pytest.raises(ValidationError, match="non-unseen relation"):
            load_split(path, onto)

    def test_read_kg_triples_malformed(self, tmp_path):
        path = tmp_path / "kg.tsv"
        path.write_text("a\tb\n")
        with pytest.raises(ParseError):
            read_kg_triples(path)
