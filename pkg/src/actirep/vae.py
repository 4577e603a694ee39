"""Convolutional VAE over actigraphy maps.

Encoder: conv(16, 3, s2) -> conv(32, 3, s2) -> dense(16) -> (mu, log_var) of
size ``latent_dim``.  Decoder mirrors it: dense(16) -> dense(32 x h/4 x w/4)
-> tconv(32, s2) -> tconv(16, s2) -> tconv(1, s1) -> sigmoid.  ReLU between
hidden layers.  Loss per map is summed pixel BCE plus ``kl_weight`` times the
KL divergence from N(0, I).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import nncore as nn
from .actigram import ActigraphyMap, write_pgm
from .errors import (
    DimOutOfRange,
    InsufficientClassData,
    InsufficientData,
    LengthMismatch,
    ShapeHeterogeneity,
    ShapeMismatch,
)
from .nncore.conv import conv_geometry
from .nncore.params import ParamSet
from .nncore.tensor import Tensor, sigmoid_np
from .seeding import derive_seed

LOGVAR_CLAMP = 20.0
MICRO_BATCH = 16
_F32_BELOW_ONE = np.nextafter(np.float32(1.0), np.float32(0.0))


@dataclass
class VaeConfig:
    latent_dim: int = 8
    enc_filters: list[int] = field(default_factory=lambda: [16, 32])
    dec_filters: list[int] = field(default_factory=lambda: [32, 16, 1])
    kernel: int = 3
    dense_units: int = 16
    epochs: int = 30
    batch_size: int = 128
    kl_weight: float = 1.0
    learning_rate: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.latent_dim < 1 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("latent_dim, epochs and batch_size must be >= 1")
        if self.kl_weight < 0:
            raise ValueError("kl_weight must be >= 0")
        if len(self.enc_filters) != 2 or len(self.dec_filters) != 3 or self.dec_filters[-1] != 1:
            raise ValueError("expected two encoder convs and three transposed convs ending in 1 filter")


@dataclass
class LatentCode:
    mu: np.ndarray
    log_var: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.log_var = np.clip(np.asarray(self.log_var, dtype=np.float64), -LOGVAR_CLAMP, LOGVAR_CLAMP)


@dataclass
class ClassLatentStats:
    label: str
    mean: np.ndarray
    covariance: np.ndarray


@dataclass
class LabeledMap:
    map: ActigraphyMap
    label: str
    synthetic: bool = False

    @property
    def participant_id(self) -> str:
        return self.map.participant_id


@dataclass
class TrainingLog:
    loss: list[float] = field(default_factory=list)
    reconstruction: list[float] = field(default_factory=list)
    kl: list[float] = field(default_factory=list)


class VaeModel(ParamSet):
    def __init__(self, cfg: VaeConfig, input_shape: tuple[int, int]):
        super().__init__()
        self.cfg = cfg
        self.input_shape = tuple(int(v) for v in input_shape)
        h, w = self.input_shape
        k = cfg.kernel
        f1, f2 = cfg.enc_filters
        d1, d2, d3 = cfg.dec_filters
        h1, _, _ = conv_geometry(h, k, 2, "same")
        w1, _, _ = conv_geometry(w, k, 2, "same")
        h2, _, _ = conv_geometry(h1, k, 2, "same")
        w2, _, _ = conv_geometry(w1, k, 2, "same")
        self.mid_shape = (h1, w1)
        self.bottleneck = (f2, h2, w2)
        flat = f2 * h2 * w2
        L, D = cfg.latent_dim, cfg.dense_units
        layers = {
            "enc.conv1": nn.LayerSpec("conv2d", f1, 1, k, 2, "same", "relu"),
            "enc.conv2": nn.LayerSpec("conv2d", f2, f1, k, 2, "same", "relu"),
            "enc.dense": nn.LayerSpec("dense", D, flat, activation="relu"),
            "enc.mu": nn.LayerSpec("dense", L, D),
            "enc.logvar": nn.LayerSpec("dense", L, D),
            "dec.dense1": nn.LayerSpec("dense", D, L, activation="relu"),
            "dec.dense2": nn.LayerSpec("dense", flat, D, activation="relu"),
            "dec.tconv1": nn.LayerSpec("conv2d_transpose", d1, f2, k, 2, "same", "relu"),
            "dec.tconv2": nn.LayerSpec("conv2d_transpose", d2, d1, k, 2, "same", "relu"),
            "dec.tconv3": nn.LayerSpec("conv2d_transpose", d3, d2, k, 1, "same", "linear"),
        }
        for name, spec in layers.items():
            self.add_layer(name, spec, derive_seed(cfg.seed, f"vae/init/{name}"))

    # -- graph pieces ---------------------------------------------------------
    def _apply(self, name: str, x: Tensor, **kw) -> Tensor:
        return nn.forward(self.specs[name], self.layer(name), x, **kw)

    def encode_tensor(self, x: Tensor) -> tuple[Tensor, Tensor]:
        if x.shape[1:] != (1,) + self.input_shape:
            raise ShapeMismatch(f"expected maps of shape {self.input_shape}, got {x.shape[2:]}")
        h = self._apply("enc.conv1", x)
        h = self._apply("enc.conv2", h)
        h = h.reshape(h.shape[0], -1)
        h = self._apply("enc.dense", h)
        mu = self._apply("enc.mu", h)
        log_var = nn.clip(self._apply("enc.logvar", h), -LOGVAR_CLAMP, LOGVAR_CLAMP)
        return mu, log_var

    def decode_logits(self, z: Tensor) -> Tensor:
        if z.ndim != 2 or z.shape[1] != self.cfg.latent_dim:
            raise LengthMismatch(f"latent vectors must have length {self.cfg.latent_dim}")
        h = self._apply("dec.dense1", z)
        h = self._apply("dec.dense2", h)
        h = h.reshape((z.shape[0],) + self.bottleneck)
        h = self._apply("dec.tconv1", h, output_size=self.mid_shape)
        h = self._apply("dec.tconv2", h, output_size=self.input_shape)
        return self._apply("dec.tconv3", h)


def kl_divergence(mu, log_var) -> np.ndarray:
    """KL(N(mu, exp(log_var)) || N(0, I)) summed over the last axis."""
    mu = np.asarray(mu, dtype=np.float64)
    lv = np.asarray(log_var, dtype=np.float64)
    return -0.5 * np.sum(1.0 + lv - mu * mu - np.exp(lv), axis=-1)


def _kl_tensor(mu: Tensor, log_var: Tensor) -> Tensor:
    inner = (1.0 + log_var) - nn.square(mu) - nn.exp(log_var)
    return nn.tsum(inner, axis=1) * -0.5


def _stack(maps) -> np.ndarray:
    return np.stack([m.values for m in maps]).astype(np.float32)[:, None]


def check_maps(maps, minimum: int = 1) -> tuple[int, int]:
    if len(maps) < minimum:
        raise InsufficientData(f"need at least {minimum} maps, got {len(maps)}")
    shapes = {m.values.shape for m in maps}
    if len(shapes) != 1:
        raise ShapeHeterogeneity(f"maps have differing shapes: {sorted(shapes)}")
    return shapes.pop()


def batch_loss(model: VaeModel, x: np.ndarray, noise: np.ndarray, scale: float) -> tuple[Tensor, float, float]:
    """Scaled summed loss of a micro-batch plus its (recon, kl) sums."""
    xt = Tensor(x)
    mu, lv = model.encode_tensor(xt)
    z = mu + nn.exp(lv * 0.5) * Tensor(noise)
    logits = model.decode_logits(z)
    recon = nn.bce_with_logits_rows(logits, x)
    kl = _kl_tensor(mu, lv)
    total = nn.tsum(recon + kl * model.cfg.kl_weight) * scale
    return total, float(recon.data.sum()), float(kl.data.sum())


def train_vae(maps, cfg: VaeConfig, log_fn=None) -> tuple[VaeModel, TrainingLog]:
    shape = check_maps(maps, cfg.batch_size)
    model = VaeModel(cfg, shape)
    data = _stack(maps)
    n = len(data)
    rng = np.random.default_rng(derive_seed(cfg.seed, "vae/train"))
    opt = nn.OptimizerState(learning_rate=cfg.learning_rate)
    log = TrainingLog()
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        tot = rec = kl = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            model.zero_grad()
            for m0 in range(0, len(idx), MICRO_BATCH):
                sub = idx[m0 : m0 + MICRO_BATCH]
                noise = rng.standard_normal((len(sub), cfg.latent_dim)).astype(np.float32)
                loss, r, k = batch_loss(model, data[sub], noise, 1.0 / len(idx))
                loss.backward()
                rec += r
                kl += k
                tot += r + cfg.kl_weight * k
            nn.optimizer_step(opt, model.params, model.grads())
        log.loss.append(tot / n)
        log.reconstruction.append(rec / n)
        log.kl.append(kl / n)
        if log_fn is not None:
            log_fn(epoch, log)
    model.zero_grad()
    return model, log


# -- inference -------------------------------------------------------------------
def encode(model: VaeModel, m: ActigraphyMap) -> LatentCode:
    if m.values.shape != model.input_shape:
        raise ShapeMismatch(f"map shape {m.values.shape} != training shape {model.input_shape}")
    mu, lv = model.encode_tensor(Tensor(_stack([m])))
    return LatentCode(mu.data[0], lv.data[0])


def encode_batch(model: VaeModel, maps, chunk: int = MICRO_BATCH) -> list[LatentCode]:
    codes: list[LatentCode] = []
    for start in range(0, len(maps), chunk):
        part = maps[start : start + chunk]
        for m in part:
            if m.values.shape != model.input_shape:
                raise ShapeMismatch(f"map shape {m.values.shape} != training shape {model.input_shape}")
        mu, lv = model.encode_tensor(Tensor(_stack(part)))
        codes.extend(LatentCode(mu.data[i], lv.data[i]) for i in range(len(part)))
    return codes


def reparameterize(code: LatentCode, noise) -> np.ndarray:
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != code.mu.shape:
        raise LengthMismatch(f"noise length {noise.shape} != latent length {code.mu.shape}")
    return code.mu + np.exp(0.5 * code.log_var) * noise


def decode(model: VaeModel, z) -> np.ndarray:
    """Decoded map values, strictly inside (0, 1)."""
    z = np.asarray(z, dtype=np.float32)
    if z.shape != (model.cfg.latent_dim,):
        raise LengthMismatch(f"latent vector must have length {model.cfg.latent_dim}, got {z.shape}")
    p = sigmoid_np(model.decode_logits(Tensor(z[None])).data[0, 0])
    # float32 sigmoid saturates to exactly 0 or 1 for large |logit|
    return np.clip(p, np.float32(1e-7), _F32_BELOW_ONE)


def reference_code(model: VaeModel, maps) -> LatentCode:
    """Code of the map with the median total activity."""
    totals = [float(m.values.sum()) for m in maps]
    idx = int(np.argsort(totals, kind="stable")[(len(totals) - 1) // 2])
    return encode(model, maps[idx])


def traverse(model: VaeModel, base_code: LatentCode, dim: int, lo: float, hi: float, steps: int):
    """Sweep one latent coordinate over ``linspace(lo, hi, steps)``.

    Returns the sweep values and the decoded maps, shape (steps, H, W).
    """
    L = model.cfg.latent_dim
    if not 0 <= dim < L:
        raise DimOutOfRange(f"dim {dim} outside [0, {L})")
    if not lo < hi or steps < 2:
        raise ValueError("need lo < hi and steps >= 2")
    values = np.linspace(lo, hi, steps)
    out = []
    for v in values:
        z = base_code.mu.copy()
        z[dim] = v
        out.append(decode(model, z))
    return values, np.stack(out)


def traversal_grid(model: VaeModel, base_code: LatentCode, lo: float = -2.0, hi: float = 2.0, steps: int = 9):
    """(latent_dim, steps, H, W): one traversal row per latent dimension."""
    return np.stack([traverse(model, base_code, d, lo, hi, steps)[1] for d in range(model.cfg.latent_dim)])


def grid_image(grid: np.ndarray) -> np.ndarray:
    """Tile a (rows, cols, H, W) grid into uint8 with 1-pixel white gutters."""
    rows, cols, h, w = grid.shape
    img = np.full((rows * (h + 1) - 1, cols * (w + 1) - 1), 255, dtype=np.uint8)
    tiles = np.round(np.clip(grid, 0.0, 1.0) * 255.0).astype(np.uint8)
    for r in range(rows):
        for c in range(cols):
            img[r * (h + 1) : r * (h + 1) + h, c * (w + 1) : c * (w + 1) + w] = tiles[r, c]
    return img


def write_traversal(model: VaeModel, base_code: LatentCode, path, lo=-2.0, hi=2.0, steps=9) -> np.ndarray:
    grid = traversal_grid(model, base_code, lo, hi, steps)
    write_pgm(grid_image(grid), path)
    return grid


# -- class-conditional generation ---------------------------------------------------
def fit_class_stats(codes) -> dict[str, ClassLatentStats]:
    """Per-label mean and diagonal (n-1) covariance of the code means."""
    by_label: dict[str, list[np.ndarray]] = {}
    for code, label in codes:
        by_label.setdefault(label, []).append(np.asarray(code.mu, dtype=np.float64))
    out = {}
    for label in sorted(by_label):
        mus = np.stack(by_label[label])
        if len(mus) < 2:
            raise InsufficientClassData(f"label {label!r} has {len(mus)} code(s); need 2")
        out[label] = ClassLatentStats(label, mus.mean(axis=0), np.diag(mus.var(axis=0, ddof=1)))
    return out


def generate(model: VaeModel, stats: ClassLatentStats, n: int, seed: int) -> list[LabeledMap]:
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(derive_seed(seed, f"vae/generate/{stats.label}"))
    cov = np.asarray(stats.covariance, dtype=np.float64)
    if np.count_nonzero(cov - np.diag(np.diag(cov))):
        factor = np.linalg.cholesky(cov + 1e-12 * np.eye(len(cov)))
    else:
        factor = np.diag(np.sqrt(np.diag(cov)))
    eps = rng.standard_normal((n, len(stats.mean)))
    zs = stats.mean + eps @ factor.T
    return [
        LabeledMap(ActigraphyMap(f"syn-{stats.label}-{i:03d}", decode(model, z)), stats.label, synthetic=True)
        for i, z in enumerate(zs)
    ]


# -- persistence -------------------------------------------------------------------
def save_vae(model: VaeModel, path) -> None:
    path = Path(path)
    nn.save(path, model.state_dict())
    meta = {"config": asdict(model.cfg), "input_shape": list(model.input_shape)}
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_vae(path) -> VaeModel:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    model = VaeModel(VaeConfig(**meta["config"]), tuple(meta["input_shape"]))
    model.load_state_dict(nn.load(path))
    return model


def write_latents_csv(ids, codes, path) -> None:
    L = len(codes[0].mu) if codes else 8
    head = ["participant_id"] + [f"mu_{i + 1}" for i in range(L)] + [f"logvar_{i + 1}" for i in range(L)]
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(",".join(head) + "\n")
        for pid, c in zip(ids, codes):
            fh.write(",".join([pid] + [repr(float(v)) for v in c.mu] + [repr(float(v)) for v in c.log_var]) + "\n")


def read_latents_csv(path) -> dict[str, LatentCode]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    head = lines[0].split(",")
    L = sum(h.startswith("mu_") for h in head)
    out = {}
    for line in lines[1:]:
        if not line.strip():
            continue
        parts = line.split(",")
        vals = np.array([float(v) for v in parts[1:]])
        out[parts[0]] = LatentCode(vals[:L], vals[L : 2 * L])
    return out
