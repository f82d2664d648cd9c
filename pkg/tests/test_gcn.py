"""Semantic-graph construction, normalization, propagation and GCN training."""

import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from facetzsl.encoder import ComponentEmbeddingTable
from facetzsl.features import FeatureStore
from facetzsl.gcn import (
    ClassifierPropagator,
    GcnConfig,
    SemanticGraph,
    build_semantic_graphs,
    fuse,
    ground_truth_classifiers,
    normalize_adjacency,
    predict_by_classifiers,
    propagate_classifiers,
    seen_regression_loss,
    train_gcn,
)
from facetzsl.ontology import ValidationError
from helpers import make_table


def small_config(**kw):
    base = dict(tau=0.5, hidden_dim=8, layers=2, epochs=5, seed=0)
    base.update(kw)
    return GcnConfig(**base)


class TestConfig:
    @pytest.mark.parametrize("tau", [-1.5, 1.01])
    def test_tau_range(self, tau):
        with pytest.raises(ValidationError, match="tau"):
            GcnConfig(tau=tau).validate()

    def test_unknown_fusion(self):
        with pytest.raises(ValidationError, match="fusion"):
            GcnConfig(fusion="majority").validate()

    def test_positive_sizes(self):
        with pytest.raises(ValidationError):
            GcnConfig(layers=0).validate()

    def test_defaults_valid(self):
        GcnConfig().validate()


class TestBuildGraphs:
    def test_identical_components_fully_connect(self):
        comps = np.tile(np.array([1.0, 2.0]), (4, 1, 1))  # every class equal
        graphs = build_semantic_graphs(make_table(comps), tau=0.95)
        assert len(graphs) == 1
        np.testing.assert_array_equal(graphs[0].adjacency, np.ones((4, 4)))

    def test_orthogonal_components_only_self_loop(self):
        comps = np.eye(3)[:, None, :]  # rows orthogonal
        graphs = build_semantic_graphs(make_table(comps), tau=0.5)
        np.testing.assert_array_equal(graphs[0].adjacency, np.eye(3))

    def test_per_aspect_graphs_differ(self):
        comps = np.zeros((3, 2, 3))
        comps[:, 0, :] = [1.0, 0.0, 0.0]  # aspect 0: everyone identical
        comps[:, 1, :] = np.eye(3)  # aspect 1: everyone orthogonal
        graphs = build_semantic_graphs(make_table(comps), tau=0.5)
        assert [g.aspect_id for g in graphs] == ["p0", "p1"]
        np.testing.assert_array_equal(graphs[0].adjacency, np.ones((3, 3)))
        np.testing.assert_array_equal(graphs[1].adjacency, np.eye(3))
        np.testing.assert_array_equal(graphs[1].features, np.eye(3))

    def test_threshold_monotone(self):
        rng = np.random.default_rng(4)
        comps = rng.standard_normal((6, 1, 4))
        taus = [-0.5, 0.0, 0.5, 0.9]
        edge_counts = [
            build_semantic_graphs(make_table(comps), tau=t)[0].adjacency.sum()
            for t in taus
        ]
        assert edge_counts == sorted(edge_counts, reverse=True)

    def test_negative_tau_keeps_anticorrelated(self):
        comps = np.array([[[1.0, 0.0]], [[-0.6, 0.8]]])  # cosine -0.6
        loose = build_semantic_graphs(make_table(comps), tau=-0.9)[0]
        tight = build_semantic_graphs(make_table(comps), tau=0.0)[0]
        assert loose.adjacency[0, 1] == 1.0
        assert tight.adjacency[0, 1] == 0.0

    def test_threshold_is_strict(self):
        comps = np.array([[[1.0, 0.0]], [[-1.0, 0.0]]])  # cosine exactly -1
        graph = build_semantic_graphs(make_table(comps), tau=-1.0)[0]
        assert graph.adjacency[0, 1] == 0.0

    def test_zero_norm_component_rejected(self):
        comps = np.ones((3, 1, 2))
        comps[1, 0] = 0.0
        with pytest.raises(ValidationError, match="zero-norm"):
            build_semantic_graphs(make_table(comps), tau=0.5)

    def test_self_loops_always_present(self):
        comps = np.random.default_rng(7).standard_normal((5, 2, 3))
        for g in build_semantic_graphs(make_table(comps), tau=0.99):
            np.testing.assert_array_equal(np.diag(g.adjacency), 1.0)


class TestNormalizeAdjacency:
    def test_identity_is_fixed_point(self):
        np.testing.assert_array_equal(normalize_adjacency(np.eye(4)), np.eye(4))

    def test_two_node_complete_graph(self):
        out = normalize_adjacency(np.ones((2, 2)))
        np.testing.assert_allclose(out, 0.5 * np.ones((2, 2)), atol=1e-15)

    def test_path_graph_hand_values(self):
        adj = np.array([[1, 1, 0], [1, 1, 1], [0, 1, 1]], dtype=float)
        out = normalize_adjacency(adj)
        s6 = 1.0 / math.sqrt(6.0)
        expected = np.array(
            [[0.5, s6, 0.0], [s6, 1.0 / 3.0, s6], [0.0, s6, 0.5]]
        )
        np.testing.assert_allclose(out, expected, atol=1e-15)

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=30)
    def test_preserves_symmetry_and_support(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(2, 7))
        adj = (rng.uniform(size=(m, m)) < 0.4).astype(float)
        adj = np.maximum(adj, adj.T)
        np.fill_diagonal(adj, 1.0)
        out = normalize_adjacency(adj)
        np.testing.assert_allclose(out, out.T, atol=1e-15)
        np.testing.assert_array_equal(out != 0, adj != 0)
        assert (out >= 0).all() and (out <= 1).all()

    def test_isolated_row_rejected(self):
        adj = np.eye(3)
        adj[2, 2] = 0.0
        with pytest.raises(ValidationError, match="isolated"):
            normalize_adjacency(adj)


class TestFuse:
    def test_average_of_identical_is_identity(self):
        z = torch.from_numpy(np.random.default_rng(0).standard_normal((4, 3)))
        out = fuse([z.clone(), z.clone(), z.clone()], "average")
        np.testing.assert_array_equal(out.numpy(), z.numpy())

    @pytest.mark.parametrize("k", [1, 2, 3, 5])
    def test_identity_holds_for_any_graph_count(self, k):
        z = torch.from_numpy(np.random.default_rng(k).uniform(-1, 1, (3, 4)))
        out = fuse([z.clone() for _ in range(k)], "average")
        np.testing.assert_array_equal(out.numpy(), z.numpy())

    def test_empty_list_rejected(self):
        with pytest.raises(ValidationError, match="fuse"):
            fuse([], "average")

    def test_average_hand_case(self):
        a = torch.zeros((2, 2), dtype=torch.float64)
        b = torch.full((2, 2), 4.0, dtype=torch.float64)
        np.testing.assert_array_equal(fuse([a, b], "average").numpy(), 2.0)

    def test_linear_with_stacked_identity_equals_average(self):
        rng = np.random.default_rng(1)
        zs = [torch.from_numpy(rng.standard_normal((5, 3))) for _ in range(4)]
        weight = torch.from_numpy(np.tile(np.eye(3), (4, 1)) / 4.0)
        lin = fuse(zs, "linear", weight)
        avg = fuse(zs, "average")
        np.testing.assert_allclose(lin.numpy(), avg.numpy(), atol=1e-9)

    def test_linear_requires_weight(self):
        with pytest.raises(ValidationError, match="weight"):
            fuse([torch.zeros(2, 2)], "linear")

    def test_unknown_mode(self):
        with pytest.raises(ValidationError, match="fusion"):
            fuse([torch.zeros(2, 2)], "concat")

    def test_commutes_with_row_permutation(self):
        rng = np.random.default_rng(2)
        zs = [torch.from_numpy(rng.standard_normal((6, 2))) for _ in range(3)]
        perm = torch.from_numpy(rng.permutation(6))
        direct = fuse([z[perm] for z in zs], "average")
        after = fuse(zs, "average")[perm]
        np.testing.assert_array_equal(direct.numpy(), after.numpy())


class TestPropagator:
    def test_weights_shared_across_graphs(self):
        model = ClassifierPropagator(4, 3, n_graphs=5, config=small_config())
        # parameter count is independent of the graph count (fusion=average)
        assert len(model.weights) == 2
        assert model.fusion_weight is None
        adj = torch.from_numpy(np.eye(3))
        x = torch.from_numpy(np.random.default_rng(3).standard_normal((3, 4)))
        outs = [z.detach() for z in model.propagate([adj] * 5, [x] * 5)]
        for z in outs[1:]:
            np.testing.assert_array_equal(z.numpy(), outs[0].numpy())

    def test_single_identity_layer_is_identity_map(self):
        model = ClassifierPropagator(3, 3, 1, small_config(layers=1))
        with torch.no_grad():
            model.weights[0].copy_(torch.eye(3, dtype=torch.float64))
        x = torch.from_numpy(np.random.default_rng(5).standard_normal((4, 3)))
        out = model.propagate([torch.from_numpy(np.eye(4))], [x])[0]
        np.testing.assert_array_equal(out.detach().numpy(), x.numpy())

    def test_zero_features_propagate_zero(self):
        model = ClassifierPropagator(3, 2, 1, small_config())
        out = model(
            [torch.from_numpy(np.eye(4))] ,
            [torch.zeros((4, 3), dtype=torch.float64)],
        )
        np.testing.assert_array_equal(out.detach().numpy(), 0.0)

    def test_two_layer_numpy_oracle(self):
        config = small_config(hidden_dim=3, leaky_slope=0.2)
        model = ClassifierPropagator(2, 2, 1, config)
        rng = np.random.default_rng(8)
        adj_raw = np.array([[1, 1, 0], [1, 1, 1], [0, 1, 1]], dtype=float)
        adj = normalize_adjacency(adj_raw)
        x = rng.standard_normal((3, 2))
        w0 = model.weights[0].detach().numpy()
        w1 = model.weights[1].detach().numpy()
        h = adj @ x @ w0
        h = np.where(h > 0, h, 0.2 * h)
        expected = adj @ h @ w1
        out = model(
            [torch.from_numpy(adj)], [torch.from_numpy(x)]
        ).detach().numpy()
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_linear_fusion_initializes_at_average(self):
        rng = np.random.default_rng(9)
        adjs = [torch.from_numpy(np.eye(4)) for _ in range(3)]
        feats = [torch.from_numpy(rng.standard_normal((4, 3))) for _ in range(3)]
        lin = ClassifierPropagator(3, 2, 3, small_config(fusion="linear"))
        avg = ClassifierPropagator(3, 2, 3, small_config(fusion="average"))
        with torch.no_grad():
            for wl, wa in zip(lin.weights, avg.weights):
                wl.copy_(wa)
            a = lin(adjs, feats).numpy()
            b = avg(adjs, feats).numpy()
        np.testing.assert_allclose(a, b, atol=1e-12)


class TestGroundTruth:
    def test_rows_follow_class_order(self):
        store = FeatureStore(
            2,
            "real",
            {
                "u": np.array([[1.0, 1.0], [3.0, 3.0]]),
                "v": np.array([[5.0, 0.0]]),
            },
        )
        gt = ground_truth_classifiers(store, ["v", "u"])
        np.testing.assert_array_equal(gt, [[5.0, 0.0], [2.0, 2.0]])

    def test_missing_class_rejected(self):
        store = FeatureStore(2, "real", {"u": np.ones((1, 2))})
        with pytest.raises(ValidationError, match="absent"):
            ground_truth_classifiers(store, ["u", "w"])


class TestSeenLoss:
    def test_zero_at_exact_fit(self):
        fused = torch.from_numpy(np.arange(12.0).reshape(4, 3))
        rows = torch.tensor([1, 3])
        loss = seen_regression_loss(fused, fused[rows], rows)
        assert float(loss) == 0.0

    def test_hand_value(self):
        fused = torch.zeros((3, 2), dtype=torch.float64)
        targets = torch.tensor([[1.0, 0.0], [2.0, 0.0]], dtype=torch.float64)
        loss = seen_regression_loss(fused, targets, torch.tensor([0, 2]))
        assert float(loss) == pytest.approx(2.5, abs=1e-15)  # (1 + 4) / 2

    def test_unseen_rows_do_not_contribute(self):
        fused = torch.zeros((3, 2), dtype=torch.float64)
        fused[1] = 1e6  # not a seen row; must not matter
        targets = torch.zeros((2, 2), dtype=torch.float64)
        loss = seen_regression_loss(fused, targets, torch.tensor([0, 2]))
        assert float(loss) == 0.0


def toy_graphs(m=4, k=2, seed=0):
    rng = np.random.default_rng(seed)
    comps = rng.standard_normal((m, k, 3))
    table = make_table(comps)
    return build_semantic_graphs(table, tau=0.5), table


class TestTrainGcn:
    def test_empty_graphs_rejected(self):
        with pytest.raises(ValidationError, match="no semantic graphs"):
            train_gcn([], np.zeros((1, 2)), ["c0"], small_config())

    def test_disagreeing_class_order_rejected(self):
        graphs, _ = toy_graphs()
        other = SemanticGraph(
            graphs[1].aspect_id,
            list(reversed(graphs[1].class_ids)),
            graphs[1].adjacency,
            graphs[1].features,
        )
        with pytest.raises(ValidationError, match="class order"):
            train_gcn([graphs[0], other], np.zeros((1, 3)), ["c0"], small_config())

    def test_unknown_seen_class_rejected(self):
        graphs, _ = toy_graphs()
        with pytest.raises(ValidationError, match="missing"):
            train_gcn(graphs, np.zeros((1, 3)), ["nope"], small_config())

    def test_target_row_count_must_match(self):
        graphs, _ = toy_graphs()
        with pytest.raises(ValidationError, match="per seen class"):
            train_gcn(graphs, np.zeros((3, 2)), ["c0", "c1"], small_config())

    def test_same_seed_same_history(self):
        graphs, _ = toy_graphs()
        gt = np.random.default_rng(1).standard_normal((2, 4))
        _, h1 = train_gcn(graphs, gt, ["c0", "c1"], small_config(epochs=4))
        _, h2 = train_gcn(graphs, gt, ["c0", "c1"], small_config(epochs=4))
        assert h1 == h2

    def test_realizable_regression_converges(self):
        """Orthogonal features + single linear layer: the seen targets are
        exactly representable, so the loss must go to ~0."""
        comps = np.eye(4)[:, None, :]
        graphs = build_semantic_graphs(make_table(comps), tau=0.5)
        gt = np.random.default_rng(2).standard_normal((3, 2))
        config = small_config(layers=1, epochs=400, learning_rate=0.05)
        model, history = train_gcn(graphs, gt, ["c0", "c1", "c2"], config)
        assert history[-1] < 1e-3
        assert history[-1] < history[0]
        fused = propagate_classifiers(model, graphs)
        assert fused.shape == (4, 2)
        np.testing.assert_allclose(fused[:3], gt, atol=0.05)

    def test_history_length_and_finiteness(self):
        graphs, _ = toy_graphs()
        gt = np.zeros((1, 2))
        model, history = train_gcn(graphs, gt, ["c2"], small_config(epochs=7))
        assert len(history) == 7
        assert all(np.isfinite(history))
        assert np.isfinite(propagate_classifiers(model, graphs)).all()


class TestPredict:
    def test_nearest_classifier_by_dot_product(self):
        classifiers = np.array([[1.0, 0.0], [0.0, 1.0]])
        feats = np.array([[3.0, 1.0], [0.2, 0.9]])
        labels = predict_by_classifiers(classifiers, ["a", "b"], feats)
        assert labels == ["a", "b"]

    def test_allowed_restricts_candidates(self):
        classifiers = np.array([[10.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        feats = np.array([[1.0, 0.0]])
        unrestricted = predict_by_classifiers(classifiers, ["s", "u1", "u2"], feats)
        assert unrestricted == ["s"]
        restricted = predict_by_classifiers(
            classifiers, ["s", "u1", "u2"], feats, allowed=["u1", "u2"]
        )
        assert restricted == ["u1"]

    def test_tie_breaks_by_candidate_order(self):
        classifiers = np.array([[1.0, 0.0], [1.0, 0.0]])
        feats = np.array([[1.0, 1.0]])
        assert predict_by_classifiers(classifiers, ["x", "y"], feats) == ["x"]
        assert (
            predict_by_classifiers(
                classifiers, ["x", "y"], feats, allowed=["y", "x"]
            )
            == ["y"]
        )
