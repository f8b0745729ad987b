"""Information-bottleneck cost network, hand-written in numpy.

Layers ``F -> H1 -> n -> H2 -> 1``, leaky-ReLU on every hidden layer and a
linear output predicting standardized ``log(1 + cost)``. The ``n``-wide
layer is the latent space: :meth:`BottleneckNet.encode` stops there and
:meth:`BottleneckNet.head` finishes the pass from a latent point.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import TrainingError

LEAK = 0.01
_MAGIC = b"QSNET1"


def _act(z):
    return np.where(z > 0, z, LEAK * z)


def _dact(z):
    return np.where(z > 0, 1.0, LEAK)


@dataclass
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 3e-3
    batch_size: int = 32
    seed: int = 0


class BottleneckNet:
    PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3", "W4", "b4")

    def __init__(self, n_features, hidden1=32, latent=8, hidden2=16, seed=0):
        if not (latent < hidden1 and latent < hidden2):
            raise ValueError("bottleneck must be narrower than both neighbouring layers")
        self.sizes = (n_features, hidden1, latent, hidden2, 1)
        rng = np.random.default_rng(seed)
        self.params = {}
        for i, (a, b) in enumerate(zip(self.sizes[:-1], self.sizes[1:]), 1):
            self.params[f"W{i}"] = rng.normal(0.0, np.sqrt(2.0 / a), (a, b))
            self.params[f"b{i}"] = np.zeros(b)
        self.x_mean = np.zeros(n_features)
        self.x_scale = np.ones(n_features)
        self.y_mean = 0.0
        self.y_scale = 1.0

    @property
    def latent_dim(self):
        return self.sizes[2]

    # -- forward passes -------------------------------------------------

    def _norm(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.sizes[0]:
            raise ValueError(f"expected {self.sizes[0]} features, got {X.shape[1]}")
        return (X - self.x_mean) / self.x_scale

    def _forward(self, Xn, params=None):
        p = self.params if params is None else params
        z1 = Xn @ p["W1"] + p["b1"]
        a1 = _act(z1)
        z2 = a1 @ p["W2"] + p["b2"]
        a2 = _act(z2)
        z3 = a2 @ p["W3"] + p["b3"]
        a3 = _act(z3)
        out = a3 @ p["W4"] + p["b4"]
        return out[:, 0], (Xn, z1, a1, z2, a2, z3, a3)

    def encode(self, X):
        Xn = self._norm(X)
        _, cache = self._forward(Xn)
        return cache[4]

    def head(self, Z):
        p = self.params
        a3 = _act(np.atleast_2d(Z) @ p["W3"] + p["b3"])
        return (a3 @ p["W4"] + p["b4"])[:, 0] * self.y_scale + self.y_mean

    def predict(self, X):
        """Predicted log(1 + cost) per row."""
        out, _ = self._forward(self._norm(X))
        return out * self.y_scale + self.y_mean

    # -- training -------------------------------------------------------

    def loss_and_grads(self, Xn, yn, params=None):
        """Mean squared error on standardized targets and its gradient."""
        p = self.params if params is None else params
        out, (x, z1, a1, z2, a2, z3, a3) = self._forward(Xn, p)
        m = len(yn)
        diff = out - yn
        loss = float(np.mean(diff ** 2))
        d_out = (2.0 / m) * diff[:, None]
        g = {"W4": a3.T @ d_out, "b4": d_out.sum(0)}
        d3 = (d_out @ p["W4"].T) * _dact(z3)
        g["W3"], g["b3"] = a2.T @ d3, d3.sum(0)
        d2 = (d3 @ p["W3"].T) * _dact(z2)
        g["W2"], g["b2"] = a1.T @ d2, d2.sum(0)
        d1 = (d2 @ p["W2"].T) * _dact(z1)
        g["W1"], g["b1"] = x.T @ d1, d1.sum(0)
        return loss, g

    def fit(self, X, y, config: TrainConfig = None):
        """Adam on minibatches drawn by a seeded shuffle. Returns final loss."""
        cfg = config or TrainConfig()
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if len(X) == 0:
            raise TrainingError("cannot train on an empty experience set")
        self.x_mean = X.mean(0)
        sd = X.std(0)
        self.x_scale = np.where(sd > 1e-12, sd, 1.0)
        self.y_mean = float(y.mean())
        self.y_scale = float(y.std()) if y.std() > 1e-12 else 1.0
        Xn, yn = self._norm(X), (y - self.y_mean) / self.y_scale
        rng = np.random.default_rng(cfg.seed)
        m1 = {k: np.zeros_like(v) for k, v in self.params.items()}
        m2 = {k: np.zeros_like(v) for k, v in self.params.items()}
        b1, b2, eps, step = 0.9, 0.999, 1e-8, 0
        for _ in range(cfg.epochs):
            order = rng.permutation(len(Xn))
            for s in range(0, len(order), cfg.batch_size):
                idx = order[s:s + cfg.batch_size]
                _, g = self.loss_and_grads(Xn[idx], yn[idx])
                step += 1
                for k in self.params:
                    m1[k] = b1 * m1[k] + (1 - b1) * g[k]
                    m2[k] = b2 * m2[k] + (1 - b2) * g[k] ** 2
                    mh = m1[k] / (1 - b1 ** step)
                    vh = m2[k] / (1 - b2 ** step)
                    self.params[k] -= cfg.learning_rate * mh / (np.sqrt(vh) + eps)
        loss, _ = self.loss_and_grads(Xn, yn)
        return loss

    # -- persistence ------------------------------------------------------

    def save(self, path):
        header = {"sizes": list(self.sizes), "leak": LEAK, "y_mean": self.y_mean,
                  "y_scale": self.y_scale, "order": ["x_mean", "x_scale", *self.PARAM_NAMES],
                  "shapes": [list(self.params[k].shape) for k in self.PARAM_NAMES]}
        hb = json.dumps(header).encode()
        flat = np.concatenate([self.x_mean, self.x_scale] + [self.params[k].ravel() for k in self.PARAM_NAMES])
        with open(path, "wb") as fh:
            fh.write(_MAGIC + struct.pack("<I", len(hb)) + hb)
            fh.write(flat.astype("<f8").tobytes())

    @classmethod
    def load(cls, path):
        data = open(path, "rb").read()
        if data[:6] != _MAGIC:
            raise TrainingError(f"{path}: not a saved network")
        (hl,) = struct.unpack_from("<I", data, 6)
        header = json.loads(data[10:10 + hl])
        flat = np.frombuffer(data, dtype="<f8", offset=10 + hl)
        F, h1, n, h2, _ = header["sizes"]
        net = cls(F, h1, n, h2)
        pos = 0
        net.x_mean, pos = flat[pos:pos + F].copy(), pos + F
        net.x_scale, pos = flat[pos:pos + F].copy(), pos + F
        for k, shape in zip(cls.PARAM_NAMES, header["shapes"]):
            size = int(np.prod(shape))
            net.params[k] = flat[pos:pos + size].reshape(shape).copy()
            pos += size
        net.y_mean, net.y_scale = header["y_mean"], header["y_scale"]
        return net


@dataclass
class Experience:
    plan_features: np.ndarray
    measured: float
    fingerprint: str
    sampled: bool
    state_features: np.ndarray | None = None

    def __post_init__(self):
        if not self.measured >= 0:
            raise ValueError("measured cost must be >= 0")
        if not np.all(np.isfinite(self.plan_features)):
            raise ValueError("plan features must be finite")


def train_bottleneck(experiences, n_features=None, include_states=False, config: TrainConfig = None,
                     latent=8, hidden1=32, hidden2=16):
    """Fit a fresh :class:`BottleneckNet` to experiences' log(1 + measured).

    With ``include_states`` every construction state of an experience is a
    training row too, labelled with the cheapest measured plan reaching it.
    """
    experiences = list(experiences)
    if not experiences:
        raise TrainingError("cannot train on an empty experience set")
    cfg = config or TrainConfig()
    labels = {}
    for e in experiences:
        rows = e.state_features if include_states and e.state_features is not None else [e.plan_features]
        y = float(np.log1p(e.measured))
        for r in rows:
            key = np.asarray(r, dtype=float).tobytes()
            if key not in labels or y < labels[key][1]:
                labels[key] = (np.asarray(r, dtype=float), y)
    items = [labels[k] for k in sorted(labels)]
    X = np.array([x for x, _ in items])
    y = np.array([v for _, v in items])
    net = BottleneckNet(n_features or X.shape[1], hidden1, latent, hidden2, seed=cfg.seed)
    net.fit(X, y, cfg)
    return net
