"""Supervised training of the periodicity classifier.

Adam with gradient-norm clipping on the mean per-step binary
cross-entropy. Sequences are bucketed by length so every batch unrolls
to its exact length with no padding. All randomness (init, shuffling,
validation holdout, dropout) comes from the config seed, so training is
bit-reproducible on one platform.
"""

from __future__ import annotations

import numpy as np

from ..errors import ParameterError, TrainingDivergedError
from ..features import cov_from_iats
from ..streamgen import LabeledStream
from .model import (ModelParams, PeriodicityModel, RnnConfig, init_params,
                    sequence_loss_grads)

__all__ = ["train", "Adam"]


class Adam:
    """Per-parameter adaptive step on a list of arrays, updated in place."""

    def __init__(self, arrays: list[np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.arrays = arrays
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for a, g, m, v in zip(self.arrays, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            a -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def _clip_global_norm(grads: list[np.ndarray], clip: float) -> None:
    if clip <= 0:
        return
    total = 0.0
    for g in grads:
        total += float((g * g).sum())
    norm = np.sqrt(total)
    if norm > clip:
        scale = clip / norm
        for g in grads:
            g *= scale


def _length_buckets(seqs: list[np.ndarray]) -> dict[int, list[int]]:
    buckets: dict[int, list[int]] = {}
    for i, s in enumerate(seqs):
        buckets.setdefault(s.size, []).append(i)
    return buckets


def _batch_matrix(seqs: list[np.ndarray], idx: np.ndarray) -> np.ndarray:
    x = np.stack([seqs[i] for i in idx], axis=1)  # (T, B)
    return np.ascontiguousarray(x)


def _epoch_batches(rng: np.random.Generator, buckets: dict[int, list[int]],
                   batch_size: int) -> list[np.ndarray]:
    batches = []
    for length in sorted(buckets):
        idx = np.array(buckets[length])
        rng.shuffle(idx)
        for start in range(0, idx.size, batch_size):
            batches.append(idx[start : start + batch_size])
    order = rng.permutation(len(batches))
    return [batches[i] for i in order]


def _dropout_masks(rng: np.random.Generator, config: RnnConfig,
                   shape_tb: tuple[int, int]) -> list:
    T, B = shape_tb
    masks = []
    for size, rate in zip(config.layer_sizes, config.dropout):
        if rate == 0.0:
            masks.append(None)
        else:
            keep = rng.random((T, B, size)) >= rate
            masks.append(keep.astype(np.float64) / (1.0 - rate))
    return masks


def _mean_loss(params: ModelParams, seqs, labels, indices) -> float:
    """Dropout-free loss over a set of sequences, weighted per sequence."""
    buckets = _length_buckets([seqs[i] for i in indices])
    total = 0.0
    count = 0
    index_arr = np.asarray(indices)
    for length, local in buckets.items():
        sel = index_arr[local]
        x = _batch_matrix(seqs, sel)
        y = labels[sel]
        loss, _ = sequence_loss_grads(params, x, y)
        total += loss * sel.size
        count += sel.size
    return total / count


def train(config: RnnConfig, samples: list[LabeledStream],
          progress=None) -> PeriodicityModel:
    """Train on labeled streams; returns the fitted model.

    ``samples`` is typically the train split of a generated dataset.
    Raises TrainingDivergedError (with the epoch index) if the loss
    stops being finite.
    """
    if not samples:
        raise ParameterError("empty training set")
    labels_list = [1.0 if s.label.is_periodic else 0.0 for s in samples]
    if len(set(labels_list)) < 2:
        raise ParameterError("training set must contain both classes")

    seqs = [cov_from_iats(s.iats) for s in samples]
    labels = np.array(labels_list)

    rng = np.random.default_rng(config.seed)
    params = init_params(config, rng)
    optimizer = Adam(params.arrays(), config.learning_rate)

    n = len(seqs)
    n_val = int(round(n * config.validation_fraction))
    perm = rng.permutation(n)
    val_idx = perm[:n_val]
    train_idx = perm[n_val:]
    buckets = _length_buckets([seqs[i] for i in train_idx])
    # bucket keys map back to global indices
    buckets = {
        length: [int(train_idx[i]) for i in local]
        for length, local in buckets.items()
    }

    history = {"train_loss": [], "val_loss": []}
    use_dropout = any(d > 0 for d in config.dropout)
    for epoch in range(config.epochs):
        epoch_loss = 0.0
        seen = 0
        for batch in _epoch_batches(rng, buckets, config.batch_size):
            x = _batch_matrix(seqs, batch)
            y = labels[batch]
            masks = _dropout_masks(rng, config, x.shape) if use_dropout else None
            loss, grads = sequence_loss_grads(params, x, y, masks)
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch)
            grad_arrays = grads.arrays()
            _clip_global_norm(grad_arrays, config.grad_clip)
            optimizer.step(grad_arrays)
            epoch_loss += loss * batch.size
            seen += batch.size
        history["train_loss"].append(epoch_loss / seen)
        if n_val > 0:
            history["val_loss"].append(_mean_loss(params, seqs, labels, val_idx))
        if progress is not None:
            progress(epoch, history)

    metadata = {
        "optimizer": {"name": "adam", "learning_rate": config.learning_rate,
                      "beta1": 0.9, "beta2": 0.999, "grad_clip": config.grad_clip},
        "loss": "mean per-step binary cross-entropy",
        "train_sequences": int(train_idx.size),
        "validation_sequences": int(n_val),
    }
    return PeriodicityModel(config, params, history, metadata)
