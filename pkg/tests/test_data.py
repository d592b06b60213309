import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hgraphormer.autodiff import Params
from hgraphormer.data import (
    Dataset,
    generate_synthetic,
    load_checkpoint,
    load_dataset,
    save_checkpoint,
    save_dataset,
)
from hgraphormer.errors import (
    DataError,
    InvalidParameters,
    LabelOutOfRange,
    MalformedLine,
    ShapeMismatch,
    StratificationWarning,
)
from hgraphormer.hypergraph import from_edge_list
from hgraphormer.model import ModelConfig, init_params

from conftest import hypergraphs


def write_fixture(d, edges="0 1\n", features="1\t0\n0\t1\n", labels="0\t0\n1\t1\n", num_nodes=2, weights=None):
    d.mkdir(parents=True, exist_ok=True)
    (d / "edges.txt").write_text(edges)
    (d / "features.tsv").write_text(features)
    (d / "labels.tsv").write_text(labels)
    m = {"name": "tiny", "num_nodes": num_nodes, "num_classes": 2,
         "edges": "edges.txt", "features": "features.tsv", "labels": "labels.tsv"}
    if weights is not None:
        (d / "weights.txt").write_text(weights)
        m["weights"] = "weights.txt"
    (d / "manifest.json").write_text(json.dumps(m))
    return d / "manifest.json"


pytestmark = pytest.mark.filterwarnings("ignore::hgraphormer.errors.StratificationWarning")


class TestLoad:
    def test_two_node_fixture(self, tmp_path):
        ds = load_dataset(write_fixture(tmp_path))
        assert (ds.num_nodes, ds.hypergraph.num_edges, ds.feature_dim, ds.num_classes) == (2, 1, 2, 2)
        assert ds.labels.tolist() == [0, 1]

    def test_comments_and_weights(self, tmp_path):
        m = write_fixture(tmp_path, edges="# header\n0 1  # first\n\n1 0\n", weights="2.0\n0.5\n")
        ds = load_dataset(m)
        assert ds.hypergraph.weights.tolist() == [2.0, 0.5]

    def test_feature_rows_mismatch_names_file(self, tmp_path):
        m = write_fixture(tmp_path, labels="0\t0\n1\t1\n2\t1\n", edges="0 1 2\n", num_nodes=3)
        with pytest.raises(ShapeMismatch, match="features.tsv"):
            load_dataset(m)

    def test_label_count_mismatch(self, tmp_path):
        with pytest.raises(ShapeMismatch, match="labels.tsv"):
            load_dataset(write_fixture(tmp_path, labels="0\t0\n"))

    @pytest.mark.parametrize(
        "kw, lineno",
        [
            (dict(edges="0 1\n0 x\n"), 2),
            (dict(edges="0 1\n\n1 1\n"), 3),
            (dict(edges="0 5\n"), 1),
            (dict(features="1\t0\n0\n"), 2),
            (dict(labels="0\t0\n1\n"), 2),
        ],
    )
    def test_malformed_line_numbers(self, tmp_path, kw, lineno):
        with pytest.raises(MalformedLine) as ei:
            load_dataset(write_fixture(tmp_path, **kw))
        assert ei.value.lineno == lineno and f":{lineno}" in str(ei.value)

    def test_duplicate_id_in_edge(self, tmp_path):
        with pytest.raises(MalformedLine, match="duplicate"):
            load_dataset(write_fixture(tmp_path, edges="0 1 0\n"))

    def test_label_out_of_range(self, tmp_path):
        with pytest.raises(LabelOutOfRange):
            load_dataset(write_fixture(tmp_path, labels="0\t0\n1\t2\n"))

    def test_missing_files(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_dataset(tmp_path / "nope.json")
        m = write_fixture(tmp_path)
        (tmp_path / "labels.tsv").unlink()
        with pytest.raises(FileNotFoundError):
            load_dataset(m)

    def test_bad_manifest(self, tmp_path):
        (tmp_path / "m.json").write_text('{"name": "x"}')
        with pytest.raises(DataError):
            load_dataset(tmp_path / "m.json")


class TestRoundTrip:
    def test_synthetic(self, tmp_path):
        ds = generate_synthetic(seed=3)
        assert load_dataset(save_dataset(ds, tmp_path)) == ds

    @settings(max_examples=25, deadline=None)
    @given(hypergraphs(weighted=True), st.integers(0, 2**31))
    def test_random(self, tmp_path_factory, hg, seed):
        rng = np.random.default_rng(seed)
        labels = rng.integers(0, 2, size=hg.num_nodes)
        labels[:2] = [0, 1]
        ds = Dataset("r", hg, rng.normal(size=(hg.num_nodes, 3)) * 1e3, labels, 2)
        d = tmp_path_factory.mktemp("rt")
        assert load_dataset(save_dataset(ds, d)) == ds


class TestSynthetic:
    def test_default_fixture(self):
        ds = generate_synthetic()
        assert (ds.num_nodes, ds.num_classes, ds.feature_dim) == (60, 3, 3)
        assert np.bincount(ds.labels).tolist() == [20, 20, 20]
        assert all(len(e) == 4 for e in ds.hypergraph.hyperedges)
        mixed = [e for e in ds.hypergraph.hyperedges if len(set(ds.labels[list(e)])) > 1]
        assert len(mixed) == round(0.1 * (ds.hypergraph.num_edges - len(mixed)))
        assert all(ds.hypergraph.incident_edges[v] for v in range(60))

    def test_deterministic(self):
        assert generate_synthetic(seed=1) == generate_synthetic(seed=1)
        assert generate_synthetic(seed=1) != generate_synthetic(seed=2)

    def test_noise_free_separable(self):
        ds = generate_synthetic(noise=0.0)
        assert np.array_equal(np.argmax(ds.features, axis=1), ds.labels)

    def test_noise_amplitude(self):
        ds = generate_synthetic(noise=0.3)
        assert np.max(np.abs(ds.features - np.eye(3)[ds.labels])) <= 0.3

    @pytest.mark.parametrize("kw", [dict(edge_size=1), dict(noise=-1.0), dict(num_nodes=6, edge_size=4)])
    def test_invalid(self, kw):
        with pytest.raises(InvalidParameters):
            generate_synthetic(**kw)


class TestDatasetValidation:
    def test_small_class_warns(self):
        with pytest.warns(StratificationWarning):
            Dataset("w", from_edge_list([{0, 1}], 2), np.ones((2, 1)), np.array([0, 1]), 2)

    def test_stats(self):
        s = generate_synthetic().stats()
        assert s["num_nodes"] == 60 and s["class_counts"] == [20, 20, 20]


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        cfg = ModelConfig(num_classes=3, feature_dim=4, d_h=8, d_k=4, d_q=4, num_heads=2)
        p = init_params(cfg, seed=7)
        save_checkpoint(p, tmp_path / "ck.txt", cfg.to_dict())
        q, conf = load_checkpoint(tmp_path / "ck.txt")
        assert list(q) == list(p) and conf == cfg.to_dict()
        assert all(np.array_equal(p[k].data, q[k].data) for k in p)

    def test_format(self, tmp_path):
        save_checkpoint(Params({"w": [[1.5, -2.0]]}), tmp_path / "c.txt")
        lines = (tmp_path / "c.txt").read_text().splitlines()
        assert lines[1:] == ["w 1 2", "1.5 -2.0"]

    def test_truncated(self, tmp_path):
        (tmp_path / "c.txt").write_text("w 2 2\n1 2\n")
        with pytest.raises(MalformedLine):
            load_checkpoint(tmp_path / "c.txt")
