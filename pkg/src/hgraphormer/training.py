"""Full-batch semi-supervised training, stratified k-fold evaluation and
hyperparameter sweeps."""

from __future__ import annotations

import csv
import json
import logging
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, Params
from .data import Dataset
from .errors import (
    EmptyMask,
    InvalidParameters,
    NonFiniteLoss,
    StratificationWarning,
    TooFewClasses,
    UnknownParameter,
)
from .hypergraph import laplacian
from .model import ModelConfig, init_params, model_forward, predict

log = logging.getLogger(__name__)


@dataclass
class FoldSplit:
    fold_index: int
    train_mask: np.ndarray
    test_mask: np.ndarray


@dataclass
class FoldResult:
    fold_index: int
    loss_trace: List[float]
    accuracy: Optional[float] = None
    seconds: float = 0.0
    error: Optional[str] = None


@dataclass
class TrainReport:
    config: dict
    seed: int
    folds: List[FoldResult] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def fold_accuracies(self) -> List[float]:
        return [f.accuracy for f in self.folds if f.accuracy is not None]

    @property
    def failed_folds(self) -> List[int]:
        return [f.fold_index for f in self.folds if f.error is not None]

    @property
    def mean(self) -> float:
        acc = self.fold_accuracies
        return float(np.mean(acc)) if acc else float("nan")

    @property
    def std(self) -> float:
        acc = self.fold_accuracies
        return float(np.std(acc)) if acc else float("nan")

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "seed": self.seed,
            "fold_accuracies": self.fold_accuracies,
            "mean": self.mean,
            "std": self.std,
            "failed_folds": self.failed_folds,
            "seconds": self.seconds,
            "folds": [asdict(f) for f in self.folds],
        }

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["fold", "accuracy"])
            for f in self.folds:
                w.writerow([f.fold_index, "" if f.accuracy is None else repr(f.accuracy)])
            w.writerow(["mean", repr(self.mean)])
            w.writerow(["std", repr(self.std)])

    def write_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


# ------------------------------------------------------------------ splits


def make_folds(labels, k: int = 10, seed: int = 0) -> List[FoldSplit]:
    """Stratified k-fold partition.

    Each class is shuffled and dealt round-robin into ``k`` bins; the
    dealing position carries over between classes so that classes smaller
    than ``k`` do not all land in the first folds.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if k < 2:
        raise InvalidParameters(f"k must be >= 2, got {k}")
    classes = np.unique(labels)
    if classes.size < 2:
        raise TooFewClasses(f"stratified folds need >= 2 classes, got {classes.size}")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(labels.shape[0], dtype=np.int64)
    offset = 0
    for c in classes:
        members = rng.permutation(np.flatnonzero(labels == c))
        if members.size < k:
            warnings.warn(
                f"class {c} has {members.size} members, fewer than k={k}",
                StratificationWarning,
                stacklevel=2,
            )
        fold_of[members] = (offset + np.arange(members.size)) % k
        offset = (offset + members.size) % k
    return [FoldSplit(i, fold_of != i, fold_of == i) for i in range(k)]


def make_label_rate_splits(labels, rate: float, k: int = 10, seed: int = 0) -> List[FoldSplit]:
    """``k`` random splits training on a stratified ``rate`` fraction of
    each class (at least one node per class) and testing on the rest."""
    labels = np.asarray(labels, dtype=np.int64)
    if not 0.0 < rate < 1.0:
        raise InvalidParameters(f"label rate must be in (0, 1), got {rate}")
    classes = np.unique(labels)
    if classes.size < 2:
        raise TooFewClasses(f"need >= 2 classes, got {classes.size}")
    rng = np.random.default_rng(seed)
    splits = []
    for i in range(k):
        train = np.zeros(labels.shape[0], dtype=bool)
        for c in classes:
            members = np.flatnonzero(labels == c)
            n_train = min(members.size - 1, max(1, int(round(rate * members.size))))
            train[rng.choice(members, size=n_train, replace=False)] = True
        splits.append(FoldSplit(i, train, ~train))
    return splits


# ---------------------------------------------------------------- training


def _fit_config(cfg: ModelConfig, ds: Dataset) -> ModelConfig:
    if cfg.feature_dim == ds.feature_dim and cfg.num_classes == ds.num_classes:
        return cfg
    return cfg.replace(feature_dim=ds.feature_dim, num_classes=ds.num_classes)


def train_one_fold(
    dataset: Dataset,
    split: FoldSplit,
    cfg: ModelConfig,
    L: Optional[np.ndarray] = None,
):
    """Train from scratch on ``split.train_mask`` for ``cfg.epochs`` epochs.

    Every epoch is one full-batch forward over all nodes, cross-entropy on
    the training rows, and one Adam step. The fold's random stream is
    seeded with ``cfg.seed + split.fold_index``. Returns
    ``(params, FoldResult)``; raises ``NonFiniteLoss`` on divergence.
    """
    cfg = _fit_config(cfg, dataset)
    if not split.train_mask.any():
        raise EmptyMask(f"fold {split.fold_index} has no training nodes")
    dt = cfg.np_dtype
    if L is None:
        L = laplacian(dataset.hypergraph, dt)
    L = ad.Tensor(np.asarray(L, dtype=dt))
    X = ad.Tensor(dataset.features.astype(dt))
    fold_seed = cfg.seed + split.fold_index
    params = init_params(cfg, seed=fold_seed)
    rng = np.random.default_rng([fold_seed, 1])
    opt = AdamState(lr=cfg.lr, weight_decay=cfg.weight_decay)

    t0 = time.perf_counter()
    trace = []
    for epoch in range(cfg.epochs):
        logits = model_forward(X, L, cfg, params, training=True, rng=rng)
        loss = ad.softmax_cross_entropy(logits, dataset.labels, split.train_mask)
        value = loss.item()
        if not np.isfinite(value):
            raise NonFiniteLoss(f"fold {split.fold_index}: loss {value} at epoch {epoch}")
        trace.append(value)
        ad.backward(loss)
        ad.adam_step(params, opt, allow_missing=True)
    result = FoldResult(split.fold_index, trace, seconds=time.perf_counter() - t0)
    return params, result


def evaluate(
    params: Params,
    dataset: Dataset,
    mask,
    cfg: ModelConfig,
    L: Optional[np.ndarray] = None,
) -> float:
    """Accuracy of eval-mode argmax predictions on the masked nodes."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyMask("evaluation mask selects no nodes")
    cfg = _fit_config(cfg, dataset)
    if L is None:
        L = laplacian(dataset.hypergraph, cfg.np_dtype)
    logits = model_forward(dataset.features, L, cfg, params, training=False)
    pred = predict(logits)
    return float(np.mean(pred[mask] == dataset.labels[mask]))


def _run_fold(dataset, split, cfg, L) -> FoldResult:
    try:
        params, result = train_one_fold(dataset, split, cfg, L)
    except NonFiniteLoss as exc:
        log.warning("%s", exc)
        return FoldResult(split.fold_index, [], error=str(exc))
    result.accuracy = evaluate(params, dataset, split.test_mask, cfg, L)
    return result


def cross_validate(
    dataset: Dataset,
    cfg: ModelConfig,
    k: int = 10,
    splits: Optional[Sequence[FoldSplit]] = None,
    label_rate: Optional[float] = None,
    n_jobs: int = 1,
) -> TrainReport:
    """Train and evaluate one model per fold and aggregate accuracies.

    Splits default to stratified ``k``-fold (seeded by ``cfg.seed``) or,
    with ``label_rate``, to ``k`` label-rate splits. Folds run in worker
    processes when ``n_jobs > 1``; results are reduced in fold order.
    Folds whose loss diverges are reported in ``failed_folds`` and left
    out of the mean and std.
    """
    cfg = _fit_config(cfg, dataset)
    if splits is None:
        if label_rate is None:
            splits = make_folds(dataset.labels, k, cfg.seed)
        else:
            splits = make_label_rate_splits(dataset.labels, label_rate, k, cfg.seed)
    L = laplacian(dataset.hypergraph, cfg.np_dtype)
    t0 = time.perf_counter()
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            futures = [pool.submit(_run_fold, dataset, s, cfg, L) for s in splits]
            results = [f.result() for f in futures]
    else:
        results = [_run_fold(dataset, s, cfg, L) for s in splits]
    report = TrainReport(cfg.to_dict(), cfg.seed, results, time.perf_counter() - t0)
    if label_rate is not None:
        report.config["label_rate"] = label_rate
    return report


# ------------------------------------------------------------------ sweeps

SWEEP_PARAMS = {
    "gamma": ("gamma", float),
    "heads": ("num_heads", int),
    "layers": ("num_layers", int),
    "residual": ("use_residual", None),
    "d_k": ("d_k", int),
}


def _as_bool(v) -> bool:
    if isinstance(v, str):
        s = v.strip().lower()
        if s in ("1", "true", "yes", "on", "w"):
            return True
        if s in ("0", "false", "no", "off", "w/o", "wo"):
            return False
        raise InvalidParameters(f"not a boolean: {v!r}")
    return bool(v)


@dataclass
class SweepRow:
    value: object
    mean: float
    std: float
    report: Optional[TrainReport] = None


def sweep(
    dataset: Dataset,
    base_cfg: ModelConfig,
    param_name: str,
    values: Sequence,
    **cv_kwargs,
) -> List[SweepRow]:
    """One :func:`cross_validate` per value of ``param_name``.

    ``param_name`` is one of ``gamma``, ``heads``, ``layers``, ``residual``
    or ``d_k``. Rows come back ordered by value.
    """
    if param_name not in SWEEP_PARAMS:
        raise UnknownParameter(f"cannot sweep {param_name!r}; choose from {sorted(SWEEP_PARAMS)}")
    field_name, conv = SWEEP_PARAMS[param_name]
    conv = conv or _as_bool
    rows = []
    for raw in values:
        v = conv(raw)
        report = cross_validate(dataset, base_cfg.replace(**{field_name: v}), **cv_kwargs)
        log.info("%s=%s mean=%.4f std=%.4f", param_name, v, report.mean, report.std)
        rows.append(SweepRow(v, report.mean, report.std, report))
    rows.sort(key=lambda r: r.value)
    return rows


def write_sweep_csv(rows: Sequence[SweepRow], path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["value", "mean", "std"])
        for r in rows:
            w.writerow([r.value, repr(r.mean), repr(r.std)])
