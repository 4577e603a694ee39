"""Supervised CNN-LSTM baseline.

Each day of a map is one 24 h subsequence.  Days share a conv1d encoder
(stride 2, ReLU, global average pool); an LSTM runs over the day embeddings
and its final hidden state feeds dense(ReLU) -> dense(1) -> sigmoid.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import nncore as nn
from .errors import LeakageError, ShapeMismatch, SingleClassData
from .nncore.params import ParamSet
from .nncore.tensor import Tensor, sigmoid_np
from .seeding import derive_seed
from .vae import LabeledMap, check_maps

UNHEALTHY = "unhealthy"


@dataclass
class CnnLstmConfig:
    conv_filters: int = 32
    kernel: int = 3
    lstm_units: int = 20
    dense_units: int = 20
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        for name in ("conv_filters", "kernel", "lstm_units", "dense_units", "epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class FitLog:
    loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)


class CnnLstmModel(ParamSet):
    def __init__(self, cfg: CnnLstmConfig, input_shape: tuple[int, int], dtype=np.float32):
        super().__init__()
        self.cfg = cfg
        self.input_shape = tuple(int(v) for v in input_shape)
        F, U, D = cfg.conv_filters, cfg.lstm_units, cfg.dense_units
        layers = {
            "conv": nn.LayerSpec("conv1d", F, 1, cfg.kernel, 2, "same", "relu"),
            "lstm": nn.LayerSpec("lstm", U, F),
            "dense": nn.LayerSpec("dense", D, U, activation="relu"),
            "out": nn.LayerSpec("dense", 1, D),
        }
        for name, spec in layers.items():
            self.add_layer(name, spec, derive_seed(cfg.seed, f"cnnlstm/init/{name}"))
        if dtype != np.float32:
            self.astype(dtype)

    def day_embeddings(self, x: Tensor) -> Tensor:
        """(N, days, bins) -> (N, days, conv_filters)."""
        n, days, bins = x.shape
        h = nn.forward(self.specs["conv"], self.layer("conv"), x.reshape(n * days, 1, bins))
        h = nn.mean(h, axis=2)
        return h.reshape(n, days, self.cfg.conv_filters)

    def logits(self, x: Tensor) -> Tensor:
        if x.shape[1:] != self.input_shape:
            raise ShapeMismatch(f"expected maps of shape {self.input_shape}, got {x.shape[1:]}")
        seq = self.day_embeddings(x)
        h = nn.forward(self.specs["lstm"], self.layer("lstm"), seq)
        h = nn.forward(self.specs["dense"], self.layer("dense"), h)
        return nn.forward(self.specs["out"], self.layer("out"), h)


def day_subsequences(values: np.ndarray) -> list[np.ndarray]:
    """The 24 h subsequences (one per day) the model consumes."""
    return [np.asarray(row) for row in values]


def _arrays(items: list[LabeledMap], dtype=np.float32) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([it.map.values for it in items]).astype(dtype)
    y = np.array([1.0 if it.label == UNHEALTHY else 0.0 for it in items], dtype=dtype)
    return x, y


def mean_bce(model: CnnLstmModel, x: np.ndarray, y: np.ndarray) -> Tensor:
    logits = model.logits(Tensor(x))
    return nn.bce_with_logits(logits, y.reshape(-1, 1)) * (1.0 / len(x))


def _eval_loss(model: CnnLstmModel, x: np.ndarray, y: np.ndarray, chunk: int = 64) -> float:
    total = 0.0
    for s in range(0, len(x), chunk):
        total += float(mean_bce(model, x[s : s + chunk], y[s : s + chunk]).data) * len(x[s : s + chunk])
    return total / len(x)


def train_cnnlstm(items: list[LabeledMap], cfg: CnnLstmConfig, val: list[LabeledMap] | None = None, epochs: int | None = None):
    """Fit on labelled maps; returns (model, FitLog).

    ``val`` adds a per-epoch validation loss; ``epochs`` overrides cfg.epochs.
    """
    shape = check_maps([it.map for it in items])
    if len({it.label for it in items}) < 2:
        raise SingleClassData("training data must contain both classes")
    model = CnnLstmModel(cfg, shape)
    x, y = _arrays(items)
    xv, yv = _arrays(val) if val else (None, None)
    rng = np.random.default_rng(derive_seed(cfg.seed, "cnnlstm/train"))
    opt = nn.OptimizerState(learning_rate=cfg.learning_rate)
    log = FitLog()
    for _ in range(epochs or cfg.epochs):
        order = rng.permutation(len(x))
        total = 0.0
        for s in range(0, len(x), cfg.batch_size):
            idx = order[s : s + cfg.batch_size]
            model.zero_grad()
            loss = mean_bce(model, x[idx], y[idx])
            loss.backward()
            nn.optimizer_step(opt, model.params, model.grads())
            total += float(loss.data) * len(idx)
        log.loss.append(total / len(x))
        if xv is not None:
            log.val_loss.append(_eval_loss(model, xv, yv))
    model.zero_grad()
    return model, log


def assert_no_synthetic(items) -> None:
    bad = [it.participant_id for it in items if getattr(it, "synthetic", False)]
    if bad:
        raise LeakageError(f"synthetic maps in evaluation data: {bad[:5]}")


def train_with_augmentation(real: list[LabeledMap], synthetic: list[LabeledMap], cfg: CnnLstmConfig, test=(), **kw):
    """Train on real + synthetic maps; synthetic maps may never be test items."""
    assert_no_synthetic(test)
    for it in synthetic:
        if not it.synthetic:
            raise LeakageError(f"{it.participant_id} is not flagged synthetic")
    test_ids = {it.participant_id for it in test}
    if test_ids & {it.participant_id for it in real}:
        raise LeakageError("test participants present in the training set")
    return train_cnnlstm(list(real) + list(synthetic), cfg, **kw)


def predict_proba(model: CnnLstmModel, maps, chunk: int = 64) -> np.ndarray:
    x = np.stack([m.values for m in maps]).astype(np.float32)
    out = []
    for s in range(0, len(x), chunk):
        out.append(sigmoid_np(model.logits(Tensor(x[s : s + chunk])).data[:, 0].astype(np.float64)))
    return np.concatenate(out)


def predict(model: CnnLstmModel, m) -> float:
    values = m.values if hasattr(m, "values") else np.asarray(m)
    if values.shape != model.input_shape:
        raise ShapeMismatch(f"map shape {values.shape} != training shape {model.input_shape}")
    z = model.logits(Tensor(values[None].astype(np.float32))).data[0, 0]
    p = float(sigmoid_np(np.array([z], dtype=np.float64))[0])
    return min(max(p, 1e-12), 1.0 - 1e-12)


def save_cnnlstm(model: CnnLstmModel, path) -> None:
    path = Path(path)
    nn.save(path, model.state_dict())
    meta = {"config": asdict(model.cfg), "input_shape": list(model.input_shape)}
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_cnnlstm(path) -> CnnLstmModel:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    model = CnnLstmModel(CnnLstmConfig(**meta["config"]), tuple(meta["input_shape"]))
    model.load_state_dict(nn.load(path))
    return model
