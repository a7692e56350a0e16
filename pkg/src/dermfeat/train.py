"""Deterministic mini-batch training of the hypercolumn network under the
smoothed F1 loss.

Each epoch visits the samples in a seed-shuffled order and partitions
them into batches (the last short batch is kept). A batch is scored with
fuzzy counts pooled over all of its pixels per class, and parameters
follow stochastic gradient descent with classical momentum. Serial
execution is bit-deterministic for a fixed seed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import model
from .data import Sample
from .loss import LossConfig, f1_loss, f1_loss_grad
from .model import EncoderConfig, ModelParams
from .superpixels import labels_to_mask


@dataclass
class TrainConfig:
    batch_size: int = 12
    epochs: int = 5
    image_size: int = 64
    learning_rate: float = 0.06
    momentum: float = 0.9
    seed: int = 0
    eps: float = 1.0
    encoder: EncoderConfig = field(default_factory=EncoderConfig)

    def validate(self) -> None:
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate < 0.0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        m = self.encoder.size_multiple
        if self.image_size < m or self.image_size % m:
            raise ValueError(f"image_size {self.image_size} must be a positive "
                             f"multiple of {m}")


@dataclass
class EpochStats:
    epoch: int
    mean_batch_loss: float
    wall_time_s: float


@dataclass
class TrainReport:
    epoch_stats: list[EpochStats]

    def losses(self) -> list[float]:
        return [e.mean_batch_loss for e in self.epoch_stats]

    def to_json_dict(self, include_wall_time: bool = False) -> dict:
        """Report payload; wall times are excluded by default so report
        files stay byte-reproducible across reruns."""
        epochs = []
        for e in self.epoch_stats:
            rec: dict = {"epoch": e.epoch, "mean_batch_loss": e.mean_batch_loss}
            if include_wall_time:
                rec["wall_time_s"] = e.wall_time_s
            epochs.append(rec)
        return {"epochs": epochs}


def train(dataset: Sequence[Sample],
          cfg: TrainConfig) -> tuple[ModelParams, TrainReport]:
    """Run the full training loop; returns (params, per-epoch report)."""
    cfg.validate()
    if not dataset:
        raise ValueError("training dataset is empty")
    expect = (cfg.encoder.in_channels, cfg.image_size, cfg.image_size)
    truths = []
    for sample in dataset:
        if sample.image.shape != expect:
            raise ValueError(f"sample {sample.name!r} has image shape "
                             f"{sample.image.shape}, expected {expect}")
        truths.append(labels_to_mask(sample.smap, sample.labels))

    params = model.init_params(cfg.encoder, cfg.seed)
    velocity = [np.zeros_like(a) for a in params.arrays()]
    lcfg = LossConfig(eps=cfg.eps)
    # The seeded shuffle is identical every epoch so the batch partition is
    # stable: a zero learning-rate run then reports the same loss each epoch.
    order = np.random.default_rng(cfg.seed).permutation(len(dataset))

    stats = []
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        batch_losses = []
        for start in range(0, len(dataset), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            caches = []
            preds = []
            for i in idx:
                probs, cache = model.forward(params, cfg.encoder,
                                             dataset[i].image)
                preds.append(probs)
                caches.append(cache)
            pred_stack = np.stack(preds)
            truth_stack = np.stack([truths[i] for i in idx])
            batch_loss, _ = f1_loss(pred_stack, truth_stack, lcfg)
            grad_stack = f1_loss_grad(pred_stack, truth_stack, lcfg)

            grad_total = None
            for cache, grad_probs in zip(caches, grad_stack):
                grad_params, _ = model.backward(params, cfg.encoder, cache,
                                                grad_probs)
                if grad_total is None:
                    grad_total = grad_params.arrays()
                else:
                    for acc, g in zip(grad_total, grad_params.arrays()):
                        acc += g
            for p, v, g in zip(params.arrays(), velocity, grad_total):
                v *= cfg.momentum
                v -= cfg.learning_rate * g
                p += v
            batch_losses.append(batch_loss)
        stats.append(EpochStats(epoch=epoch,
                                mean_batch_loss=float(np.mean(batch_losses)),
                                wall_time_s=time.perf_counter() - t0))
    return params, TrainReport(epoch_stats=stats)


def predict(params: ModelParams, encoder: EncoderConfig,
            image: np.ndarray) -> np.ndarray:
    """Forward pass only; returns [4,H,W] probabilities in (0,1)."""
    probs, _ = model.forward(params, encoder, image)
    return probs
