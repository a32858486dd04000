"""Small trainable score network with hand-derived gradients.

Architecture: ``[x, phi(t)] -> ReLU(W) -> ReLU(W) -> d`` where ``phi`` is a
fixed random Fourier embedding of time.  Three per-sample training losses,
all with weighting ``lambda(t) = sigma^2(t)`` and noisy input
``x = m(t) x0 + sigma(t) eta``:

    score_matching  |sigma(t) s(x, t) + eta|^2          (network is s)
    denoising       |s~(x, t) + eta|^2                  (network is s~ = sigma s)
    tikhonov        |sigma(t) s(x, t) + eta|^2 + c |s(x, t)|^2

The target ``-eta`` equals ``sigma(t) grad log p(x, t | x0)``, so the first
two losses differ only in what the network parameterizes.
"""

from __future__ import annotations

import enum
import io
import json
import math
import zipfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import ConfigError, SingularTimeError, TrainingDivergedError
from .schedules import Schedule
from .scores import Dataset, ScoreModel, _as_batch

CHECKPOINT_VERSION = 1
N_FREQ = 8


class Loss(str, enum.Enum):
    SCORE_MATCHING = "score_matching"
    DENOISING = "denoising"
    TIKHONOV = "tikhonov"

    @property
    def code(self):
        return {"score_matching": 0, "denoising": 1, "tikhonov": 2}[self.value]


class FourierTimeEmbedding:
    """``t -> [sin(2 pi f_k t), cos(2 pi f_k t)]`` with frozen ``f ~ N(0, scale^2)``."""

    def __init__(self, frequencies):
        self.frequencies = np.asarray(frequencies, dtype=float).reshape(-1)
        self.frequencies.setflags(write=False)

    @classmethod
    def random(cls, rng: np.random.Generator, n_freq=N_FREQ, scale=1.0):
        return cls(scale * rng.standard_normal(n_freq))

    @property
    def dim(self):
        return 2 * self.frequencies.size

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        arg = 2.0 * math.pi * t[..., None] * self.frequencies
        return np.concatenate([np.sin(arg), np.cos(arg)], axis=-1)


class ScoreNet:
    """Two-hidden-layer ReLU network on ``[x, phi(t)]``.

    ``mode`` is ``"score"`` when the output is the score itself and
    ``"noise"`` when it is ``sigma(t)`` times the score.
    Parameters live in one flat vector ``theta`` in the order
    W1, b1, W2, b2, W3, b3 (weights stored input-major).
    """

    def __init__(self, d, width, embedding: FourierTimeEmbedding, theta=None,
                 mode="score", seed=None):
        if mode not in ("score", "noise"):
            raise ValueError("mode must be 'score' or 'noise'")
        self.d = int(d)
        self.width = int(width)
        self.embedding = embedding
        self.mode = mode
        self.seed = seed
        if theta is None:
            theta = np.zeros(self.param_count(self.d, self.width, embedding.dim))
        theta = np.ascontiguousarray(theta, dtype=float)
        if theta.shape != (self.param_count(self.d, self.width, embedding.dim),):
            raise ValueError("theta has the wrong length for this architecture")
        self.theta = theta

    @staticmethod
    def param_count(d, width, emb_dim=2 * N_FREQ):
        return (d + emb_dim + 1) * width + (width + 1) * width + (width + 1) * d

    @classmethod
    def init(cls, d, width, seed, mode="score", fourier_scale=1.0):
        """He-initialized weights and zero biases from ``seed``."""
        emb_ss, w_ss = np.random.SeedSequence(seed).spawn(2)
        emb = FourierTimeEmbedding.random(np.random.default_rng(emb_ss), scale=fourier_scale)
        net = cls(d, width, emb, mode=mode, seed=seed)
        rng = np.random.default_rng(w_ss)
        W1, b1, W2, b2, W3, b3 = net.layers()
        for W in (W1, W2, W3):
            W[...] = rng.standard_normal(W.shape) * math.sqrt(2.0 / W.shape[0])
        return net

    @property
    def din(self):
        return self.d + self.embedding.dim

    def layers(self):
        """Views ``(W1, b1, W2, b2, W3, b3)`` into ``theta``."""
        din, w, d = self.din, self.width, self.d
        sizes = [din * w, w, w * w, w, w * d, d]
        shapes = [(din, w), (w,), (w, w), (w,), (w, d), (d,)]
        out, o = [], 0
        for n, shp in zip(sizes, shapes):
            out.append(self.theta[o:o + n].reshape(shp))
            o += n
        return tuple(out)

    def copy(self):
        return ScoreNet(self.d, self.width, self.embedding, self.theta.copy(),
                        self.mode, self.seed)

    def inputs(self, X, t):
        X = np.asarray(X, dtype=float)
        t = np.broadcast_to(np.asarray(t, dtype=float), X.shape[:-1])
        return np.ascontiguousarray(np.concatenate([X, self.embedding(t)], axis=-1))

    def forward(self, x, t):
        """Raw network output for a point (d,) or batch (M, d)."""
        X, single = _as_batch(x, self.d)
        out = _kernels.mlp_forward(self.theta, self.inputs(X, t), self.din, self.width, self.d)
        return out[0] if single else out


def net_forward(net: ScoreNet, x, t):
    return net.forward(x, t)


@dataclass
class TrainConfig:
    loss: Loss = Loss.SCORE_MATCHING
    c: float = 0.0
    epochs: int = 5000
    batch_size: int | None = None
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t_lo: float | None = None
    seed: int = 0
    chunk: int = 1000

    def __post_init__(self):
        self.loss = Loss(self.loss)
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not self.lr > 0:
            raise ConfigError("learning rate must be positive")
        if self.loss is Loss.TIKHONOV and not self.c > 0:
            raise ConfigError("tikhonov loss needs c > 0")
        if self.t_lo is None:
            self.t_lo = 0.0 if self.loss is Loss.DENOISING else 1e-5

    @property
    def mode(self):
        return "noise" if self.loss is Loss.DENOISING else "score"

    def to_dict(self):
        out = asdict(self)
        out["loss"] = self.loss.value
        return out


def _check_mode(net, config):
    if net.mode != config.mode:
        raise ConfigError(f"{config.loss.value} loss trains a network in {config.mode!r} "
                          f"mode, got {net.mode!r}")


def loss_sample(net: ScoreNet, schedule: Schedule, x0, t, eta, config: TrainConfig):
    """Per-sample loss and its exact gradient with respect to ``net.theta``."""
    _check_mode(net, config)
    sig = float(schedule.std(t))
    if sig == 0.0 and config.loss is not Loss.DENOISING:
        raise SingularTimeError("score-matching losses are singular at t = 0")
    x0 = np.asarray(x0, dtype=float).reshape(1, -1)
    eta = np.asarray(eta, dtype=float).reshape(1, -1)
    x = float(schedule.mean_coeff(t)) * x0 + sig * eta
    Z = net.inputs(x, t)
    loss, grad = _kernels.loss_and_grad(net.theta, Z, np.ascontiguousarray(eta),
                                        np.array([sig]), config.loss.code, float(config.c),
                                        net.din, net.width, net.d)
    return float(loss), grad


def train(net: ScoreNet, dataset: Dataset, schedule: Schedule, config: TrainConfig,
          checkpoints=(), on_checkpoint=None):
    """Adam on mini-batches of the data, fresh ``(t, eta)`` per point per step.

    Trains ``net`` in place and returns ``(net, history)`` where ``history``
    holds the mean loss of each epoch.  Random draws are made in fixed chunks
    of ``config.chunk`` epochs from ``default_rng(config.seed)``, so both
    kernel backends see identical inputs and checkpoints do not perturb the
    run.  ``on_checkpoint(epoch, net)`` is called after each listed epoch.
    """
    _check_mode(net, config)
    if net.d != dataset.d:
        raise ConfigError("network and dataset dimensions differ")
    N = dataset.N
    B = N if config.batch_size is None else int(config.batch_size)
    if B < 1 or N % B:
        raise ConfigError(f"batch size {B} must divide N = {N}")
    stops = sorted({int(e) for e in checkpoints if 0 < int(e) <= config.epochs})
    per_epoch = N // B
    rng = np.random.default_rng(config.seed)
    T, t_lo = schedule.T, float(config.t_lo)
    x0 = dataset.points
    adam_m = np.zeros_like(net.theta)
    adam_v = np.zeros_like(net.theta)
    step = 0
    history = np.empty(config.epochs)
    done = 0
    while done < config.epochs:
        E = min(config.chunk, config.epochs - done)
        S = E * per_epoch
        if per_epoch == 1:
            idx = np.broadcast_to(np.arange(N), (S, N))
        else:
            idx = np.concatenate([rng.permutation(N) for _ in range(E)]).reshape(S, B)
        u = rng.random((S, B))
        eta = rng.standard_normal((S, B, dataset.d))
        t = T - (T - t_lo) * u
        m = np.asarray(schedule.mean_coeff(t))
        sig = np.asarray(schedule.std(t))
        x = m[..., None] * x0[idx] + sig[..., None] * eta
        Z = np.ascontiguousarray(np.concatenate([x, net.embedding(t)], axis=-1))
        cuts = [e - done for e in stops if done < e < done + E] + [E]
        lo = 0
        for hi in cuts:
            a, b = lo * per_epoch, hi * per_epoch
            losses, step = _kernels.train_chunk(
                net.theta, adam_m, adam_v, step, Z[a:b], eta[a:b], sig[a:b],
                config.loss.code, float(config.c), config.lr, config.beta1, config.beta2,
                config.eps, net.din, net.width, net.d)
            if losses.shape[0] < b - a or not np.all(np.isfinite(losses)):
                bad = done + lo + int(np.flatnonzero(~np.isfinite(losses))[0]) // per_epoch
                raise TrainingDivergedError(f"non-finite loss at epoch {bad}", epoch=bad)
            history[done + lo:done + hi] = losses.reshape(hi - lo, per_epoch).mean(axis=1)
            lo = hi
            if on_checkpoint is not None and done + hi in stops:
                on_checkpoint(done + hi, net)
        done += E
    return net, history


@dataclass(eq=False)
class NeuralScore(ScoreModel):
    """Score model backed by a trained network (divides by sigma in noise mode)."""

    net: ScoreNet
    schedule: Schedule
    name: str = field(default="neural")
    tag = "neural"

    @property
    def dim(self):
        return self.net.d

    def __call__(self, X, t):
        out = self.net.forward(X, t)
        if self.net.mode == "noise":
            sig = float(self.schedule.std(t))
            if sig == 0.0:
                raise SingularTimeError("denoising-mode network gives a singular score at t = 0")
            out = out / sig
        return out

    def regular_at_zero(self):
        return self.net.mode == "score"

    @property
    def label(self):
        return f"neural(width={self.net.width},mode={self.net.mode})"


def neural_score_model(net: ScoreNet, schedule: Schedule, config: TrainConfig | None = None):
    if config is not None:
        _check_mode(net, config)
    return NeuralScore(net, schedule)


# -- persistence ---------------------------------------------------------------

def save_checkpoint(net: ScoreNet, path, extra=None):
    """Write an ``.npz`` checkpoint (widths, frequencies, parameters, mode, seed).

    Zip entries carry a fixed date so identical networks give identical files.
    """
    meta = {"version": CHECKPOINT_VERSION, "d": net.d, "width": net.width,
            "mode": net.mode, "seed": net.seed, "extra": extra or {}}
    arrays = {"theta": net.theta, "frequencies": np.asarray(net.embedding.frequencies),
              "meta": np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)}
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
            zf.writestr(info, buf.getvalue())


def load_checkpoint(path) -> ScoreNet:
    with np.load(Path(path)) as f:
        meta = json.loads(bytes(f["meta"]).decode())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        return ScoreNet(meta["d"], meta["width"], FourierTimeEmbedding(f["frequencies"]),
                        theta=f["theta"].copy(), mode=meta["mode"], seed=meta["seed"])


def write_loss_history(history, path):
    with open(path, "w", newline="") as fh:
        fh.write("epoch,mean_loss\n")
        for i, v in enumerate(history):
            fh.write(f"{i + 1},{v:.17g}\n")
