"""Stacked-LSTM periodicity classifier: parameters, forward pass, file format.

The stack mirrors a four-layer recurrent network with a single sigmoid
output unit. Each LSTM layer keeps standard sigmoid/tanh gate
activations internally; a ReLU is applied to its hidden output before
it feeds the next layer (and the output unit), and dropout is applied
after the ReLU on layers configured with a non-zero rate (training
only, inverted scaling).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import InsufficientDataError, NumericError, ParameterError
from .kernels import lstm_layer_backward, lstm_layer_forward

__all__ = ["RnnConfig", "LayerParams", "ModelParams", "PeriodicityModel",
           "init_params", "stack_forward", "stack_backward", "sequence_loss_grads"]

DESK_LAYER_SIZES = (32, 64, 64, 32)
PAPER_LAYER_SIZES = (200, 400, 400, 200)


@dataclass(frozen=True)
class RnnConfig:
    """Architecture and training hyperparameters.

    Defaults are desk-scale; ``PAPER_LAYER_SIZES`` gives the full-width
    variant for users with patience. Dropout applies per layer; the
    default puts 25% on the last two layers only.
    """

    layer_sizes: tuple[int, ...] = DESK_LAYER_SIZES
    dropout: tuple[float, ...] = (0.0, 0.0, 0.25, 0.25)
    seed: int = 0
    learning_rate: float = 2e-3
    epochs: int = 30
    batch_size: int = 128
    validation_fraction: float = 0.1
    grad_clip: float = 5.0

    def __post_init__(self):
        if len(self.layer_sizes) < 1 or any(s < 1 for s in self.layer_sizes):
            raise ParameterError("layer sizes must be positive")
        if len(self.dropout) != len(self.layer_sizes):
            raise ParameterError("need one dropout rate per layer")
        if any(not (0 <= d < 1) for d in self.dropout):
            raise ParameterError("dropout rates must lie in [0, 1)")
        if not (0 <= self.validation_fraction < 1):
            raise ParameterError("validation fraction must lie in [0, 1)")

    def to_dict(self) -> dict:
        return {
            "layer_sizes": list(self.layer_sizes),
            "dropout": list(self.dropout),
            "seed": self.seed,
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "validation_fraction": self.validation_fraction,
            "grad_clip": self.grad_clip,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RnnConfig":
        return cls(
            layer_sizes=tuple(d["layer_sizes"]),
            dropout=tuple(d["dropout"]),
            seed=d["seed"],
            learning_rate=d["learning_rate"],
            epochs=d["epochs"],
            batch_size=d["batch_size"],
            validation_fraction=d["validation_fraction"],
            grad_clip=d["grad_clip"],
        )


@dataclass
class LayerParams:
    wx: np.ndarray  # (I, 4H)
    wh: np.ndarray  # (H, 4H)
    b: np.ndarray   # (4H,)


@dataclass
class ModelParams:
    layers: list[LayerParams]
    w_out: np.ndarray  # (H_last,)
    b_out: np.ndarray  # (1,)

    def arrays(self) -> list[np.ndarray]:
        """All parameter arrays in a fixed order (views, not copies)."""
        out = []
        for lp in self.layers:
            out.extend((lp.wx, lp.wh, lp.b))
        out.extend((self.w_out, self.b_out))
        return out

    def copy(self) -> "ModelParams":
        return ModelParams(
            [LayerParams(lp.wx.copy(), lp.wh.copy(), lp.b.copy()) for lp in self.layers],
            self.w_out.copy(),
            self.b_out.copy(),
        )


def init_params(config: RnnConfig, rng: np.random.Generator) -> ModelParams:
    """Uniform init in [-k, k] with k = 1/sqrt(fan_in); forget bias 1."""
    layers = []
    fan_in = 1
    for size in config.layer_sizes:
        kx = 1.0 / np.sqrt(fan_in)
        kh = 1.0 / np.sqrt(size)
        wx = rng.uniform(-kx, kx, (fan_in, 4 * size))
        wh = rng.uniform(-kh, kh, (size, 4 * size))
        b = np.zeros(4 * size)
        b[size : 2 * size] = 1.0
        layers.append(LayerParams(wx, wh, b))
        fan_in = size
    k = 1.0 / np.sqrt(fan_in)
    w_out = rng.uniform(-k, k, fan_in)
    b_out = np.zeros(1)
    return ModelParams(layers, w_out, b_out)


def stack_forward(params: ModelParams, x: np.ndarray, masks: list | None = None):
    """Forward pass over a batch of sequences.

    ``x`` has shape (T, B); ``masks`` is an optional per-layer list of
    pre-scaled dropout masks (None entries for layers without dropout).
    Returns (logits (T, B), caches) where caches feed stack_backward.
    """
    T, B = x.shape
    a = np.ascontiguousarray(x).reshape(T, B, 1)
    caches = []
    for idx, lp in enumerate(params.layers):
        h, c, gates = lstm_layer_forward(a, lp.wx, lp.wh, lp.b)
        mask = masks[idx] if masks is not None else None
        act = np.maximum(h, 0.0)
        if mask is not None:
            act = act * mask
        caches.append((a, h, c, gates, mask))
        a = act
    logits = a @ params.w_out + params.b_out[0]
    caches.append(a)
    return logits, caches


def stack_backward(params: ModelParams, caches, dlogits: np.ndarray) -> ModelParams:
    """Gradients for every parameter given d(loss)/d(logits) (T, B)."""
    act_last = caches[-1]
    T, B, H_last = act_last.shape
    dw_out = act_last.reshape(T * B, H_last).T @ dlogits.reshape(T * B)
    db_out = np.array([dlogits.sum()])
    dact = dlogits[:, :, None] * params.w_out
    grad_layers: list[LayerParams] = [None] * len(params.layers)
    for idx in range(len(params.layers) - 1, -1, -1):
        a_in, h, c, gates, mask = caches[idx]
        if mask is not None:
            dact = dact * mask
        dh_out = np.ascontiguousarray(dact * (h > 0))
        lp = params.layers[idx]
        dx, dwx, dwh, db = lstm_layer_backward(a_in, lp.wx, lp.wh, h, c, gates, dh_out)
        grad_layers[idx] = LayerParams(dwx, dwh, db)
        dact = dx
    return ModelParams(grad_layers, dw_out, db_out)


def _bce_from_logits(logits: np.ndarray, y: np.ndarray) -> float:
    z = logits
    # stable: max(z,0) - z*y + log(1 + exp(-|z|))
    per = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    return float(per.mean())


def sequence_loss_grads(params: ModelParams, x: np.ndarray, y: np.ndarray,
                        masks: list | None = None):
    """Mean per-step binary cross-entropy over a batch, plus gradients.

    The label applies to every time step, so early-decision quality is
    optimized directly. ``x`` is (T, B), ``y`` is (B,) in {0, 1}.
    """
    logits, caches = stack_forward(params, x, masks)
    loss = _bce_from_logits(logits, y[None, :])
    probs = 1.0 / (1.0 + np.exp(-logits))
    dlogits = (probs - y[None, :]) / logits.size
    grads = stack_backward(params, caches, dlogits)
    return loss, grads


class PeriodicityModel:
    """Trained classifier: config, weights, and training history."""

    def __init__(self, config: RnnConfig, params: ModelParams,
                 history: dict | None = None, metadata: dict | None = None):
        self.config = config
        self.params = params
        self.history = history or {"train_loss": [], "val_loss": []}
        self.metadata = metadata or {}

    # -- inference ----------------------------------------------------

    def step_confidences(self, cov_seq: np.ndarray) -> np.ndarray:
        """Per-step periodic confidence for one CoV sequence."""
        x = np.asarray(cov_seq, dtype=np.float64)
        if x.ndim != 1 or x.size == 0:
            raise InsufficientDataError("empty input sequence")
        if not np.all(np.isfinite(x)):
            raise NumericError("non-finite value in input sequence")
        logits, _ = stack_forward(self.params, x.reshape(-1, 1))
        out = 1.0 / (1.0 + np.exp(-logits[:, 0]))
        if not np.all(np.isfinite(out)):
            raise NumericError("non-finite classifier output")
        return out

    def forward(self, cov_seq: np.ndarray) -> float:
        """Periodic confidence in (0, 1) after the full sequence."""
        return float(self.step_confidences(cov_seq)[-1])

    def classify(self, cov_seq: np.ndarray, threshold: float) -> bool:
        if not (0 < threshold < 1):
            raise ParameterError(f"threshold must be in (0, 1), got {threshold}")
        return self.forward(cov_seq) > threshold

    def batch_step_confidences(self, cov_batch: np.ndarray) -> np.ndarray:
        """Per-step confidences for equal-length sequences (S, T) -> (S, T)."""
        xb = np.asarray(cov_batch, dtype=np.float64)
        logits, _ = stack_forward(self.params, np.ascontiguousarray(xb.T))
        return (1.0 / (1.0 + np.exp(-logits))).T

    # -- serialization ------------------------------------------------

    def save(self, path) -> None:
        meta = {
            "format": 1,
            "config": self.config.to_dict(),
            "history": self.history,
            "metadata": self.metadata,
            "n_layers": len(self.params.layers),
        }
        arrays = {"meta": np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)}
        for i, lp in enumerate(self.params.layers):
            arrays[f"wx{i}"] = lp.wx
            arrays[f"wh{i}"] = lp.wh
            arrays[f"b{i}"] = lp.b
        arrays["w_out"] = self.params.w_out
        arrays["b_out"] = self.params.b_out
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path) -> "PeriodicityModel":
        with np.load(path) as data:
            meta = json.loads(bytes(data["meta"]).decode("utf-8"))
            n_layers = meta["n_layers"]
            layers = [
                LayerParams(data[f"wx{i}"], data[f"wh{i}"], data[f"b{i}"])
                for i in range(n_layers)
            ]
            params = ModelParams(layers, data["w_out"], data["b_out"])
        return cls(RnnConfig.from_dict(meta["config"]), params,
                   meta["history"], meta["metadata"])
