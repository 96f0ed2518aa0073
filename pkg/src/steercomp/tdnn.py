"""Time-delay neural network for forecasting the steering error.

The input is a tapped delay line: for each feature the current value and
the ``taps - 1`` previous samples, feature-major. Two ``tansig`` hidden
layers (8 and 6 units) feed a linear output. With ``taps=1`` the network
sees only the current sample, which is the plain feedforward baseline.

Inputs are z-scored with statistics from the training data and the target
is scaled the same way; :func:`forward` takes a normalized tap vector and
returns the error in degrees.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ArchMismatch, ConfigError, Diverged, InsufficientData, MissingChannel

FORMAT_VERSION = 1
HIDDEN = (8, 6)
DEFAULT_FEATURES = ("u_track", "theta_measured", "v")
DEFAULT_TARGET = ("u", "theta_measured")


def tansig(x):
    """Hyperbolic-tangent sigmoid, ``2 / (1 + exp(-2x)) - 1``.

    Evaluated as ``-expm1(-2x) / (1 + exp(-2x))`` on the non-negative half
    and mirrored, which never overflows and keeps full precision near 0.
    """
    x = np.asarray(x, dtype=float)
    a = np.abs(x)
    e = np.exp(-2.0 * a)
    y = -np.expm1(-2.0 * a) / (1.0 + e)
    y = np.copysign(y, x)
    return float(y) if y.ndim == 0 else y


@dataclass
class TrainingConfig:
    learning_rate: float = 0.001
    epochs: int = 500
    batch_size: int = 32
    validation_split: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if not 0 < self.validation_split < 1:
            raise ConfigError("validation_split must lie in (0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be at least 1")


@dataclass
class TdnnModel:
    feature_names: tuple = DEFAULT_FEATURES
    taps: int = 6
    horizon_steps: int = 4
    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)
    norm_mean: np.ndarray | None = None
    norm_std: np.ndarray | None = None
    target_mean: float = 0.0
    target_std: float = 1.0
    seed: int = 0
    target_channels: tuple = DEFAULT_TARGET

    def __post_init__(self):
        self.feature_names = tuple(self.feature_names)
        self.target_channels = tuple(self.target_channels)
        if self.taps < 1 or self.horizon_steps < 1:
            raise ConfigError("taps and horizon_steps must be at least 1")

    @classmethod
    def create(cls, feature_names=DEFAULT_FEATURES, taps=6, horizon_steps=4, seed=0,
               target_channels=DEFAULT_TARGET) -> "TdnnModel":
        model = cls(feature_names=feature_names, taps=taps, horizon_steps=horizon_steps,
                    seed=seed, target_channels=target_channels)
        rng = np.random.default_rng(seed)
        for fan_in, fan_out in zip(model.layer_dims[:-1], model.layer_dims[1:]):
            scale = 1.0 / math.sqrt(fan_in)
            model.weights.append(rng.uniform(-0.5, 0.5, size=(fan_out, fan_in)) * scale)
            model.biases.append(rng.uniform(-0.5, 0.5, size=fan_out) * scale)
        return model

    @property
    def input_dim(self) -> int:
        return len(self.feature_names) * self.taps

    @property
    def layer_dims(self) -> list[int]:
        return [self.input_dim, *HIDDEN, 1]

    @property
    def architecture(self) -> tuple:
        return (self.feature_names, self.taps, tuple(self.layer_dims))

    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def copy(self) -> "TdnnModel":
        return TdnnModel(
            feature_names=self.feature_names, taps=self.taps, horizon_steps=self.horizon_steps,
            weights=[w.copy() for w in self.weights], biases=[b.copy() for b in self.biases],
            norm_mean=None if self.norm_mean is None else self.norm_mean.copy(),
            norm_std=None if self.norm_std is None else self.norm_std.copy(),
            target_mean=self.target_mean, target_std=self.target_std, seed=self.seed,
            target_channels=self.target_channels,
        )

    # normalization -----------------------------------------------------

    def _expanded_stats(self):
        if self.norm_mean is None:
            raise ConfigError("model has no normalization statistics; call fit_normalization")
        return np.repeat(self.norm_mean, self.taps), np.repeat(self.norm_std, self.taps)

    def normalize(self, raw):
        mean, std = self._expanded_stats()
        return (np.asarray(raw, dtype=float) - mean) / std

    def denormalize(self, z):
        mean, std = self._expanded_stats()
        return np.asarray(z, dtype=float) * std + mean

    # persistence -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": "steercomp-tdnn",
            "version": FORMAT_VERSION,
            "feature_names": list(self.feature_names),
            "target_channels": list(self.target_channels),
            "taps": self.taps,
            "horizon_steps": self.horizon_steps,
            "layer_dims": self.layer_dims,
            "seed": self.seed,
            "norm_mean": None if self.norm_mean is None else self.norm_mean.tolist(),
            "norm_std": None if self.norm_std is None else self.norm_std.tolist(),
            "target_mean": self.target_mean,
            "target_std": self.target_std,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TdnnModel":
        if d.get("format") != "steercomp-tdnn" or d.get("version") != FORMAT_VERSION:
            raise ConfigError(f"unsupported model file format {d.get('format')!r} v{d.get('version')}")
        model = cls(
            feature_names=d["feature_names"], taps=int(d["taps"]),
            horizon_steps=int(d["horizon_steps"]), seed=int(d["seed"]),
            target_channels=d.get("target_channels", DEFAULT_TARGET),
            target_mean=float(d["target_mean"]), target_std=float(d["target_std"]),
        )
        if list(d["layer_dims"]) != model.layer_dims:
            raise ArchMismatch(f"layer_dims {d['layer_dims']} do not match {model.layer_dims}")
        model.weights = [np.array(w, dtype=float).reshape(o, i) for w, i, o in
                         zip(d["weights"], model.layer_dims[:-1], model.layer_dims[1:])]
        model.biases = [np.array(b, dtype=float).reshape(o) for b, o in
                        zip(d["biases"], model.layer_dims[1:])]
        for w, b, (i, o) in zip(model.weights, model.biases,
                                zip(model.layer_dims[:-1], model.layer_dims[1:])):
            if w.shape != (o, i) or b.shape != (o,):
                raise ArchMismatch("weight shapes do not match layer_dims")
        if d["norm_mean"] is not None:
            model.norm_mean = np.array(d["norm_mean"], dtype=float)
            model.norm_std = np.array(d["norm_std"], dtype=float)
            if model.norm_mean.shape != (len(model.feature_names),):
                raise ArchMismatch("normalization statistics do not match feature count")
        return model

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "TdnnModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# datasets ----------------------------------------------------------------

def _segments(log):
    """Accept one log or a sequence of logs; windows never straddle two logs."""
    if hasattr(log, "columns"):
        return [log]
    return list(log)


def _channel(log, name):
    try:
        return np.asarray(log.columns[name], dtype=float)
    except KeyError:
        raise MissingChannel(f"log has no channel {name!r}") from None


def tap_windows(log, model: TdnnModel):
    """Raw (unnormalized) tap rows and targets in degrees."""
    xs, ys = [], []
    m, h = model.taps, model.horizon_steps
    for seg in _segments(log):
        feats = [_channel(seg, name) for name in model.feature_names]
        cmd, meas = (_channel(seg, name) for name in model.target_channels)
        length = len(cmd)
        n = length - (m - 1) - h
        if n < 1:
            continue
        t = np.arange(m - 1, m - 1 + n)
        cols = [f[t - k] for f in feats for k in range(m)]
        xs.append(np.column_stack(cols))
        ys.append(cmd[t + h] - meas[t + h])
    if not xs:
        raise InsufficientData(f"need at least taps + horizon = {m + h} samples per log")
    return np.vstack(xs), np.concatenate(ys)


def fit_normalization(model: TdnnModel, log) -> TdnnModel:
    """Set per-feature input and target statistics from ``log`` (in place)."""
    means, stds = [], []
    segs = _segments(log)
    for name in model.feature_names:
        values = np.concatenate([_channel(s, name) for s in segs])
        means.append(values.mean())
        std = values.std()
        # constant channels (e.g. speed in a fixed-speed run) are only centered
        stds.append(std if std > 1e-12 else 1.0)
    model.norm_mean = np.array(means)
    model.norm_std = np.array(stds)
    _, targets = tap_windows(log, model)
    model.target_mean = float(targets.mean())
    std = float(targets.std())
    model.target_std = std if std > 1e-12 else 1.0
    return model


def build_dataset(log, model: TdnnModel):
    """Normalized tap rows (N x features*taps) and targets (deg)."""
    raw, targets = tap_windows(log, model)
    return model.normalize(raw), targets


# network -----------------------------------------------------------------
#
# Parameters are carried as [W1, b1, W2, b2, W3, b3]. The private helpers
# take them stacked along a leading "member" axis so that several seeds
# train in lockstep; a single model is a stack of one.

def _forward_batch(params, z):
    """Hidden activations and linear output; ``z`` is (K, B, d)."""
    w1, b1, w2, b2, w3, b3 = params
    a1 = tansig(z @ w1.transpose(0, 2, 1) + b1[:, None, :])
    a2 = tansig(a1 @ w2.transpose(0, 2, 1) + b2[:, None, :])
    out = a2 @ w3.transpose(0, 2, 1) + b3[:, None, :]
    return a1, a2, out[..., 0]


def loss_and_grads(params, z, y):
    """Half mean squared error per member and its exact gradient.

    ``z`` is (K, B, d), ``y`` is (K, B) in normalized target units.
    """
    w1, b1, w2, b2, w3, b3 = params
    n = y.shape[1]
    a1, a2, out = _forward_batch(params, z)
    r = out - y
    losses = 0.5 * np.mean(r * r, axis=1)
    d_out = (r / n)[..., None]
    g_w3 = d_out.transpose(0, 2, 1) @ a2
    g_b3 = d_out.sum(axis=1)
    d2 = (d_out @ w3) * (1.0 - a2 * a2)
    g_w2 = d2.transpose(0, 2, 1) @ a1
    g_b2 = d2.sum(axis=1)
    d1 = (d2 @ w2) * (1.0 - a1 * a1)
    g_w1 = d1.transpose(0, 2, 1) @ z
    g_b1 = d1.sum(axis=1)
    return losses, [g_w1, g_b1, g_w2, g_b2, g_w3, g_b3]


def _stack(models):
    return [np.stack([m.params()[i] for m in models]) for i in range(6)]


def forward(model: TdnnModel, z):
    """Predicted error (deg) for one normalized tap vector or a batch of them."""
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    _, _, out = _forward_batch(_stack([model]), np.atleast_2d(z)[None])
    y = out[0] * model.target_std + model.target_mean
    return float(y[0]) if single else y


def predict_raw(model: TdnnModel, raw):
    return forward(model, model.normalize(raw))


def loss(model: TdnnModel, z, targets_deg) -> float:
    """Half mean squared error in normalized target units."""
    y = (np.asarray(targets_deg, dtype=float) - model.target_mean) / model.target_std
    _, _, out = _forward_batch(_stack([model]), np.atleast_2d(z)[None])
    return 0.5 * float(np.mean((out[0] - y) ** 2))


@dataclass
class TrainResult:
    model: TdnnModel
    train_loss: list
    val_loss: list
    best_epoch: int


def train(model: TdnnModel, data, cfg: TrainingConfig) -> TrainResult:
    """Mini-batch gradient descent on the half mean squared error.

    ``data`` is ``(inputs, targets)`` from :func:`build_dataset`. The
    parameters with the lowest validation loss over all epochs are kept.
    The input model is not modified.
    """
    return train_ensemble([model], data, cfg)[0]


def train_ensemble(models, data, cfg: TrainingConfig) -> list[TrainResult]:
    """Train several independently initialized models on the same data.

    Each member draws its validation split and batch order from its own
    generator seeded with ``(cfg.seed, model.seed)``, so the result for a
    member does not depend on which other members train alongside it.
    """
    models = list(models)
    if not models:
        raise ArchMismatch("nothing to train")
    for m in models[1:]:
        if m.architecture != models[0].architecture:
            raise ArchMismatch("ensemble members have different architectures")
    z, targets = data
    z = np.asarray(z, dtype=float)
    targets = np.asarray(targets, dtype=float)
    n = len(targets)
    if n < 50:
        raise InsufficientData(f"training needs at least 50 samples, got {n}")
    if z.shape != (n, models[0].input_dim):
        raise ArchMismatch(f"inputs have shape {z.shape}, model expects (N, {models[0].input_dim})")

    k = len(models)
    y = np.stack([(targets - m.target_mean) / m.target_std for m in models])
    rngs = [np.random.default_rng([cfg.seed, m.seed]) for m in models]
    n_val = max(1, int(round(n * cfg.validation_split)))
    orders = np.stack([rng.permutation(n) for rng in rngs])
    val_idx, tr_idx = orders[:, :n_val], orders[:, n_val:]
    n_tr = n - n_val
    rows = np.arange(k)[:, None]
    z_tr, y_tr = z[tr_idx], y[rows, tr_idx]
    z_val, y_val = z[val_idx], y[rows, val_idx]

    params = _stack(models)
    lr = cfg.learning_rate

    def evaluate(zs, ys):
        _, _, out = _forward_batch(params, zs)
        return 0.5 * np.mean((out - ys) ** 2, axis=1)

    train_hist = [evaluate(z_tr, y_tr)]
    val_hist = [evaluate(z_val, y_val)]
    best_loss = val_hist[0].copy()
    best_epoch = np.zeros(k, dtype=int)
    best_params = [p.copy() for p in params]
    for epoch in range(1, cfg.epochs + 1):
        perms = np.stack([rng.permutation(n_tr) for rng in rngs])
        for start in range(0, n_tr, cfg.batch_size):
            idx = perms[:, start:start + cfg.batch_size]
            _, grads = loss_and_grads(params, z_tr[rows, idx], y_tr[rows, idx])
            for p, g in zip(params, grads):
                p -= lr * g
        tl = evaluate(z_tr, y_tr)
        vl = evaluate(z_val, y_val)
        if not (np.all(np.isfinite(tl)) and np.all(np.isfinite(vl))):
            raise Diverged(f"loss became non-finite at epoch {epoch}")
        train_hist.append(tl)
        val_hist.append(vl)
        improved = vl < best_loss
        if np.any(improved):
            best_loss[improved] = vl[improved]
            best_epoch[improved] = epoch
            for bp, p in zip(best_params, params):
                bp[improved] = p[improved]

    results = []
    for i, m in enumerate(models):
        trained = m.copy()
        trained.weights = [best_params[j][i].copy() for j in (0, 2, 4)]
        trained.biases = [best_params[j][i].copy() for j in (1, 3, 5)]
        results.append(TrainResult(
            model=trained,
            train_loss=[float(h[i]) for h in train_hist],
            val_loss=[float(h[i]) for h in val_hist],
            best_epoch=int(best_epoch[i]),
        ))
    return results


def ensemble_predict(models, z):
    """Mean of the member predictions for normalized input ``z``.

    All members must share the architecture and the normalization, since
    ``z`` is normalized once.
    """
    models = list(models)
    if not models:
        raise ArchMismatch("ensemble is empty")
    ref = models[0]
    for m in models[1:]:
        if m.architecture != ref.architecture:
            raise ArchMismatch("ensemble members have different architectures")
        if not _same_stats(m, ref):
            raise ArchMismatch("ensemble members use different input normalization")
    total = 0.0
    for m in models:
        total = total + forward(m, z)
    return total / len(models)


def _same_stats(a: TdnnModel, b: TdnnModel) -> bool:
    if a.norm_mean is None or b.norm_mean is None:
        return a.norm_mean is None and b.norm_mean is None
    return bool(np.array_equal(a.norm_mean, b.norm_mean) and np.array_equal(a.norm_std, b.norm_std))


def seeded_ensemble(template: TdnnModel, seeds) -> list[TdnnModel]:
    """Fresh members sharing ``template``'s layout and normalization."""
    members = []
    for seed in seeds:
        m = TdnnModel.create(template.feature_names, template.taps, template.horizon_steps,
                             seed=seed, target_channels=template.target_channels)
        m.norm_mean = None if template.norm_mean is None else template.norm_mean.copy()
        m.norm_std = None if template.norm_std is None else template.norm_std.copy()
        m.target_mean, m.target_std = template.target_mean, template.target_std
        members.append(m)
    return members


def save_ensemble(models, path) -> None:
    body = {
        "format": "steercomp-ensemble",
        "version": FORMAT_VERSION,
        "members": [m.to_dict() for m in models],
    }
    with open(path, "w") as fh:
        json.dump(body, fh, indent=1)
        fh.write("\n")


def load_ensemble(path) -> list[TdnnModel]:
    """Read an ensemble file; a single-model file loads as a one-member ensemble."""
    with open(path) as fh:
        d = json.load(fh)
    if d.get("format") == "steercomp-tdnn":
        return [TdnnModel.from_dict(d)]
    if d.get("format") != "steercomp-ensemble" or d.get("version") != FORMAT_VERSION:
        raise ConfigError(f"{path}: not a steercomp ensemble file")
    models = [TdnnModel.from_dict(m) for m in d["members"]]
    if not models:
        raise ArchMismatch(f"{path}: ensemble has no members")
    for m in models[1:]:
        if m.architecture != models[0].architecture or not _same_stats(m, models[0]):
            raise ArchMismatch(f"{path}: members disagree on architecture or normalization")
    return models
