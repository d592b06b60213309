import csv
import json

import numpy as np
import pytest

from hgraphormer import autodiff as ad
from hgraphormer.data import Dataset, generate_synthetic
from hgraphormer.errors import (
    EmptyMask,
    InvalidParameters,
    StratificationWarning,
    TooFewClasses,
    UnknownParameter,
)
from hgraphormer.hypergraph import from_edge_list, laplacian
from hgraphormer.model import ModelConfig, init_params, model_forward
from hgraphormer.training import (
    FoldSplit,
    TrainReport,
    FoldResult,
    cross_validate,
    evaluate,
    make_folds,
    make_label_rate_splits,
    sweep,
    train_one_fold,
    write_sweep_csv,
)


@pytest.fixture(scope="module")
def synth():
    return generate_synthetic()


@pytest.fixture
def small_cfg():
    return ModelConfig(gamma=0.3, num_layers=1, num_heads=2, d_h=16, d_k=8, d_q=8, epochs=30)


class TestFolds:
    def test_one_per_class_per_fold(self):
        labels = np.repeat([0, 1], 10)
        for s in make_folds(labels, 10, seed=3):
            assert np.bincount(labels[s.test_mask], minlength=2).tolist() == [1, 1]

    def test_partition(self, synth):
        splits = make_folds(synth.labels, 10, seed=0)
        cover = np.zeros(synth.num_nodes, dtype=int)
        for s in splits:
            assert not np.any(s.train_mask & s.test_mask)
            assert np.all(s.train_mask | s.test_mask)
            cover += s.test_mask
        assert np.all(cover == 1)

    def test_stratified_sizes(self, synth):
        for s in make_folds(synth.labels, 10, seed=0):
            assert np.bincount(synth.labels[s.test_mask], minlength=3).tolist() == [2, 2, 2]

    def test_deterministic(self, synth):
        a, b = make_folds(synth.labels, seed=4), make_folds(synth.labels, seed=4)
        assert all(np.array_equal(x.test_mask, y.test_mask) for x, y in zip(a, b))
        c = make_folds(synth.labels, seed=5)
        assert not all(np.array_equal(x.test_mask, y.test_mask) for x, y in zip(a, c))

    def test_small_classes_warn_and_spread(self):
        labels = np.array([0] * 5 + [1] * 5)
        with pytest.warns(StratificationWarning):
            splits = make_folds(labels, 10)
        assert all(s.test_mask.sum() == 1 for s in splits)

    def test_errors(self):
        with pytest.raises(TooFewClasses):
            make_folds(np.zeros(20, dtype=int))
        with pytest.raises(InvalidParameters):
            make_folds(np.repeat([0, 1], 10), k=1)

    def test_label_rate(self, synth):
        splits = make_label_rate_splits(synth.labels, 0.1, k=3, seed=0)
        assert len(splits) == 3
        for s in splits:
            assert np.bincount(synth.labels[s.train_mask], minlength=3).tolist() == [2, 2, 2]
            assert not np.any(s.train_mask & s.test_mask)
        with pytest.raises(InvalidParameters):
            make_label_rate_splits(synth.labels, 1.0)


class TestTrainOneFold:
    def test_lr_zero(self, synth, small_cfg):
        cfg = small_cfg.replace(lr=0.0, dropout_p=0.0, epochs=5)
        split = make_folds(synth.labels)[0]
        full = cfg.replace(feature_dim=synth.feature_dim, num_classes=3)
        before = init_params(full, seed=cfg.seed + split.fold_index)
        params, result = train_one_fold(synth, split, cfg)
        for k in before:
            assert np.array_equal(before[k].data, params[k].data)
        assert len(set(result.loss_trace)) == 1

    def test_learns(self, synth, small_cfg):
        _, result = train_one_fold(synth, make_folds(synth.labels)[0], small_cfg.replace(epochs=50))
        assert len(result.loss_trace) == 50
        assert result.loss_trace[49] < result.loss_trace[0]

    def test_bit_identical(self, synth, small_cfg):
        split = make_folds(synth.labels)[2]
        a = train_one_fold(synth, split, small_cfg)[1].loss_trace
        b = train_one_fold(synth, split, small_cfg)[1].loss_trace
        assert a == b

    def test_empty_train(self, synth, small_cfg):
        n = synth.num_nodes
        with pytest.raises(EmptyMask):
            train_one_fold(synth, FoldSplit(0, np.zeros(n, bool), np.ones(n, bool)), small_cfg)

    def test_test_labels_do_not_reach_gradient(self, synth, small_cfg):
        cfg = small_cfg.replace(feature_dim=synth.feature_dim, num_classes=3, dropout_p=0.0)
        split = make_folds(synth.labels)[0]
        L = laplacian(synth.hypergraph)

        def grads(labels):
            params = init_params(cfg)
            logits = model_forward(synth.features, L, cfg, params)
            ad.backward(ad.softmax_cross_entropy(logits, labels, split.train_mask))
            return {k: params[k].grad for k in params}

        flipped = synth.labels.copy()
        flipped[split.test_mask] = (flipped[split.test_mask] + 1) % 3
        g0, g1 = grads(synth.labels), grads(flipped)
        assert all(np.array_equal(g0[k], g1[k]) for k in g0)

        logits = ad.Tensor(np.random.default_rng(0).normal(size=(synth.num_nodes, 3)), requires_grad=True)
        ad.backward(ad.softmax_cross_entropy(logits, synth.labels, split.train_mask))
        assert np.all(logits.grad[split.test_mask] == 0)


class TestEvaluate:
    def test_single_class(self):
        hg = from_edge_list([{0, 1, 2}, {2, 3}], 4)
        with pytest.warns(StratificationWarning):
            ds = Dataset("one", hg, np.eye(4), np.zeros(4, dtype=int), 1)
        cfg = ModelConfig(num_layers=1, num_heads=1, d_h=4, d_k=2, d_q=2, num_classes=1, feature_dim=4)
        assert evaluate(init_params(cfg), ds, np.ones(4, bool), cfg) == 1.0

    def test_perfect_logits(self, synth):
        cfg = ModelConfig(num_layers=1, num_heads=1, d_h=3, d_k=2, d_q=2, gamma=0.0,
                          num_classes=3, feature_dim=3, dropout_p=0.0)
        ds = generate_synthetic(noise=0.0)
        params = init_params(cfg)
        # make the network map one-hot features to one-hot logits
        params["embed.W"].data[:] = np.eye(3)
        params["layer0.W_Z"].data[:] = 0.0
        params["layer0.ln_shift"].data[:] = 0.0
        params["out.W"].data[:] = np.eye(3)
        assert evaluate(params, ds, np.ones(ds.num_nodes, bool), cfg) == 1.0

    def test_random_guess(self):
        accs = []
        hg = from_edge_list([list(range(i, i + 5)) for i in range(0, 140, 5)], 140)
        for seed in range(20):
            rng = np.random.default_rng(seed)
            labels = rng.permutation(np.arange(140) % 7)
            ds = Dataset("rand", hg, rng.normal(size=(140, 5)), labels, 7)
            cfg = ModelConfig(num_layers=1, num_heads=2, d_h=8, d_k=4, d_q=4,
                              num_classes=7, feature_dim=5, seed=seed)
            accs.append(evaluate(init_params(cfg), ds, np.ones(140, bool), cfg))
        assert abs(np.mean(accs) - 1 / 7) <= 0.05

    def test_empty_mask(self, synth, small_cfg):
        cfg = small_cfg.replace(feature_dim=3, num_classes=3)
        with pytest.raises(EmptyMask):
            evaluate(init_params(cfg), synth, np.zeros(60, bool), cfg)


@pytest.fixture(scope="module")
def report():
    cfg = ModelConfig(num_layers=1, num_heads=2, d_h=16, d_k=8, d_q=8, epochs=20)
    return cross_validate(generate_synthetic(), cfg)


class TestCrossValidate:
    def test_ten_folds(self, report):
        assert len(report.fold_accuracies) == 10 and not report.failed_folds
        acc = report.fold_accuracies
        assert min(acc) <= report.mean <= max(acc)
        assert all(0 <= a <= 1 for a in acc) and report.std >= 0
        assert report.std == pytest.approx(np.std(acc))

    def test_deterministic(self, report):
        cfg = ModelConfig(num_layers=1, num_heads=2, d_h=16, d_k=8, d_q=8, epochs=20)
        again = cross_validate(generate_synthetic(), cfg)
        assert again.fold_accuracies == report.fold_accuracies
        assert [f.loss_trace for f in again.folds] == [f.loss_trace for f in report.folds]

    def test_parallel_matches_serial(self, report):
        cfg = ModelConfig(num_layers=1, num_heads=2, d_h=16, d_k=8, d_q=8, epochs=20)
        par = cross_validate(generate_synthetic(), cfg, n_jobs=2)
        assert par.fold_accuracies == report.fold_accuracies

    def test_csv_and_json(self, report, tmp_path):
        report.write_csv(tmp_path / "r.csv")
        rows = list(csv.reader(open(tmp_path / "r.csv")))
        assert rows[0] == ["fold", "accuracy"] and len(rows) == 13
        assert rows[-2][0] == "mean" and float(rows[-2][1]) == report.mean
        assert rows[-1][0] == "std"
        report.write_json(tmp_path / "r.json")
        doc = json.load(open(tmp_path / "r.json"))
        assert doc["config"]["gamma"] == 0.3 and len(doc["fold_accuracies"]) == 10

    def test_failed_fold_excluded(self):
        r = TrainReport({}, 0, [FoldResult(0, [], 0.5), FoldResult(1, [], None, error="nan"), FoldResult(2, [], 1.0)])
        assert r.failed_folds == [1] and r.mean == 0.75

    def test_label_rate_mode(self):
        cfg = ModelConfig(num_layers=1, num_heads=1, d_h=8, d_k=4, d_q=4, epochs=5)
        r = cross_validate(generate_synthetic(), cfg, k=3, label_rate=0.2)
        assert len(r.folds) == 3 and r.config["label_rate"] == 0.2


class TestSweep:
    def test_gamma_eleven_rows(self, tmp_path):
        cfg = ModelConfig(num_layers=1, num_heads=1, d_h=8, d_k=4, d_q=4, epochs=2)
        values = [round(0.1 * i, 1) for i in range(11)][::-1]
        rows = sweep(generate_synthetic(), cfg, "gamma", values, k=2)
        assert [r.value for r in rows] == sorted(values) and len(rows) == 11
        write_sweep_csv(rows, tmp_path / "g.csv")
        lines = open(tmp_path / "g.csv").read().splitlines()
        assert lines[0] == "value,mean,std" and len(lines) == 12

    def test_residual_strings(self):
        cfg = ModelConfig(num_layers=1, num_heads=1, d_h=8, d_k=4, d_q=4, epochs=1)
        rows = sweep(generate_synthetic(), cfg, "residual", ["true", "w/o"], k=2)
        assert [r.value for r in rows] == [False, True]
        assert rows[0].report.config["use_residual"] is False

    def test_unknown(self, synth, small_cfg):
        with pytest.raises(UnknownParameter):
            sweep(synth, small_cfg, "lr", [0.1])
