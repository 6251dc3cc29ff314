"""Two-stage training: masked-reconstruction pretraining and supervised
fine-tuning with the reconstruction regularizer, plus evaluation.

Both loops are deterministic for a fixed (seed, thread count): batch
composition depends only on (seed, epoch), parameter initialization only
on the seed.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .datafile import Dataset, normalize_record
from .errors import CompatibilityError, ConfigError, ContractError
from .losses import loss_aux, loss_cls, loss_mae, loss_pretrain, loss_ssat, loss_task
from .model import (
    ModelConfig, ModelParams, embed_patches, forward_classify, mask_tokens,
    reconstruct,
)
from .optim import AdamState, adam_step
from .tensor import Tape, backward, record, zero_grads

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    """Optimization hyperparameters shared by both stages.

    The reference setup trains 50 epochs at batch size 1024; the
    desk-scale default keeps the published loss weights and learning
    rate but a batch of 64.
    """

    alpha: float = 0.2        # classification weight in the stage-2 loss
    beta: float = 0.8         # reconstruction-regularizer weight
    gamma: float = 0.2        # discriminator weight in the stage-1 loss
    lr: float = 0.0006
    epochs: int = 50
    batch_size: int = 64
    mask_ratio: float = 0.5
    seed: int = 0
    precision: str = "float32"

    def validate(self) -> None:
        if min(self.alpha, self.beta, self.gamma) <= 0:
            raise ConfigError("alpha, beta and gamma must be positive")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        if not 0.0 < self.mask_ratio < 1.0:
            raise ConfigError("mask_ratio must lie strictly between 0 and 1")
        if self.precision not in ("float32", "float64"):
            raise ConfigError(f"unknown precision {self.precision!r}")

    def __post_init__(self):
        self.validate()

    @property
    def dtype(self):
        return np.float32 if self.precision == "float32" else np.float64


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray       # (K, K), rows = true label, cols = prediction
    predictions: np.ndarray     # (N,)
    scores: np.ndarray          # (N,) max-softmax, the built-in open-set score
    features: np.ndarray        # (N, d) pooled features for external tooling
    labels: np.ndarray          # (N,)


@dataclass
class TrainReport:
    stage: str
    seed: int
    epoch_rows: list[dict] = field(default_factory=list)
    final_accuracy: float | None = None
    best_epoch: int | None = None
    confusion: list | None = None
    wall_clock_s: float = 0.0
    model_config: dict = field(default_factory=dict)
    train_config: dict = field(default_factory=dict)

    def loss_curve(self, key: str) -> list[float]:
        return [row[key] for row in self.epoch_rows]


def _epoch_rng(seed: int, epoch: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(key=np.array([seed, epoch], dtype=np.uint64)))


def _check_dataset(dataset: Dataset, cfg: ModelConfig) -> None:
    if dataset.record_count == 0:
        raise ContractError("dataset is empty")
    if dataset.record_len != cfg.record_len:
        raise CompatibilityError(
            f"record_len: dataset has {dataset.record_len}, model expects {cfg.record_len}")
    if dataset.n_classes != cfg.n_classes:
        raise CompatibilityError(
            f"n_classes: dataset has {dataset.n_classes}, model expects {cfg.n_classes}")


def run_pretrain(dataset: Dataset, cfg: ModelConfig, tcfg: TrainConfig,
                 params: ModelParams | None = None) -> tuple[ModelParams, TrainReport]:
    """Stage 1: reconstruct masked token spans; labels are ignored.

    The placeholder token stays frozen; all other parameters train.
    """
    _check_dataset(dataset, cfg)
    t0 = time.perf_counter()
    if params is None:
        params = ModelParams(cfg, seed=tcfg.seed, dtype=tcfg.dtype)
    records = normalize_record(dataset.samples, dtype=tcfg.dtype)
    trainable = params.trainable()
    state = AdamState(trainable)
    mask_before = params.mask_token.data.copy()
    report = TrainReport(stage="pretrain", seed=tcfg.seed,
                         model_config=asdict(cfg), train_config=asdict(tcfg))
    n = dataset.record_count
    for epoch in range(tcfg.epochs):
        rng = _epoch_rng(tcfg.seed, epoch)
        order = rng.permutation(n)
        sums = {"loss_pretrain": 0.0, "loss_mae": 0.0, "loss_aux": 0.0}
        for start in range(0, n, tcfg.batch_size):
            idx = order[start:start + tcfg.batch_size]
            xb = records[idx]
            zero_grads(trainable)
            tape = Tape()
            with record(tape):
                tokens, patches = embed_patches(xb, params)
                masked, bits = mask_tokens(tokens, tcfg.mask_ratio,
                                           params.mask_token, rng)
                p_hat = reconstruct(masked, params)
                l_mae = loss_mae(p_hat, patches, bits)
                l_aux = loss_aux(p_hat, patches, bits, params)
                l_pre = loss_pretrain(l_mae, l_aux, tcfg.gamma)
            backward(l_pre, tape)
            adam_step(trainable, state, tcfg.lr)
            w = idx.size
            sums["loss_pretrain"] += l_pre.item() * w
            sums["loss_mae"] += l_mae.item() * w
            sums["loss_aux"] += l_aux.item() * w
        row = {"epoch": epoch + 1}
        row.update({k: v / n for k, v in sums.items()})
        report.epoch_rows.append(row)
        logger.info("pretrain epoch %d: loss %.5f", epoch + 1, row["loss_pretrain"])
    assert np.array_equal(params.mask_token.data, mask_before)
    report.wall_clock_s = time.perf_counter() - t0
    return params, report


def run_finetune(train_ds: Dataset, test_ds: Dataset, cfg: ModelConfig,
                 tcfg: TrainConfig, init: ModelParams | None = None
                 ) -> tuple[ModelParams, TrainReport]:
    """Stage 2: supervised training of all layers with the reconstruction
    regularizer; returns the best-epoch parameters by test accuracy."""
    _check_dataset(train_ds, cfg)
    _check_dataset(test_ds, cfg)
    t0 = time.perf_counter()
    params = init if init is not None else ModelParams(cfg, seed=tcfg.seed, dtype=tcfg.dtype)
    present = np.unique(train_ds.labels)
    missing = sorted(set(range(cfg.n_classes)) - set(present.tolist()))
    if missing:
        logger.warning("classes absent from the training set: %s", missing)
    records = normalize_record(train_ds.samples, dtype=tcfg.dtype)
    labels = train_ds.labels
    trainable = params.trainable()
    state = AdamState(trainable)
    report = TrainReport(stage="finetune", seed=tcfg.seed,
                         model_config=asdict(cfg), train_config=asdict(tcfg))
    n = train_ds.record_count
    best_acc = -1.0
    best_epoch = 0
    best_values: list[np.ndarray] | None = None
    best_eval: EvalResult | None = None
    for epoch in range(tcfg.epochs):
        rng = _epoch_rng(tcfg.seed, epoch)
        order = rng.permutation(n)
        sums = {"loss_task": 0.0, "loss_cls": 0.0, "loss_ssat": 0.0}
        for start in range(0, n, tcfg.batch_size):
            idx = order[start:start + tcfg.batch_size]
            zero_grads(trainable)
            tape = Tape()
            with record(tape):
                probs, cache = forward_classify(records[idx], params)
                l_cls = loss_cls(probs, labels[idx])
                l_ssat = loss_ssat(cache.final, cache.patches, params.w_recon)
                l_task = loss_task(l_cls, l_ssat, tcfg.alpha, tcfg.beta)
            backward(l_task, tape)
            adam_step(trainable, state, tcfg.lr)
            w = idx.size
            sums["loss_task"] += l_task.item() * w
            sums["loss_cls"] += l_cls.item() * w
            sums["loss_ssat"] += l_ssat.item() * w
        result = evaluate(params, test_ds)
        row = {"epoch": epoch + 1}
        row.update({k: v / n for k, v in sums.items()})
        row["test_accuracy"] = result.accuracy
        report.epoch_rows.append(row)
        logger.info("finetune epoch %d: loss %.5f accuracy %.4f",
                    epoch + 1, row["loss_task"], result.accuracy)
        if result.accuracy > best_acc:
            best_acc = result.accuracy
            best_epoch = epoch + 1
            best_values = params.copy_values()
            best_eval = result
    params.load_values(best_values)
    report.final_accuracy = best_acc
    report.best_epoch = best_epoch
    report.confusion = best_eval.confusion.tolist()
    report.wall_clock_s = time.perf_counter() - t0
    return params, report


def evaluate(params: ModelParams, dataset: Dataset,
             batch_size: int = 256) -> EvalResult:
    """Accuracy, confusion matrix and per-record (prediction, score, feature).

    Argmax ties break toward the lowest class index; the result does not
    depend on record order.
    """
    if dataset.record_count == 0:
        raise ContractError("evaluate on an empty dataset")
    _check_dataset(dataset, params.cfg)
    records = normalize_record(dataset.samples, dtype=params.embed.dtype)
    k = params.cfg.n_classes
    preds = np.empty(dataset.record_count, dtype=np.int64)
    scores = np.empty(dataset.record_count)
    features = np.empty((dataset.record_count, params.cfg.embed_dim))
    for start in range(0, dataset.record_count, batch_size):
        stop = min(start + batch_size, dataset.record_count)
        probs, cache = forward_classify(records[start:stop], params)
        preds[start:stop] = np.argmax(probs.data, axis=-1)
        scores[start:stop] = np.max(probs.data, axis=-1)
        features[start:stop] = cache.pooled.data
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (dataset.labels, preds), 1)
    accuracy = float(np.mean(preds == dataset.labels))
    return EvalResult(accuracy=accuracy, confusion=confusion, predictions=preds,
                      scores=scores, features=features, labels=dataset.labels.copy())
