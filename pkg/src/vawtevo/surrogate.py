"""Feed-forward neural network fitness approximator.

One hidden layer of sigmoid units and a single sigmoid output, trained by
per-sample backpropagation on the squared error ``0.5 * (y - t)**2``.  Inputs
are genotypes scaled to [0, 1]; targets are real fitnesses min-max scaled over
the current evaluated set, and predictions are mapped back with the same
scale.

The inner training loop is compiled with numba when it is available; the
arithmetic is identical either way.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .genome import N_XY, N_Z, XY_MAX, XY_MIN, Z_MAX, Z_MIN, Genotype

try:
    from numba import njit
except ImportError:  # pragma: no cover - exercised only without numba
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

LEARNING_RATE = 0.3
THETA = 0.0
MOMENTUM = 0.0
HIDDEN = 15
EPOCHS = 1000
INIT_RANGE = 0.5
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class EvaluatedRecord:
    genotype: Genotype
    fitness: float

    def __post_init__(self):
        if not (math.isfinite(self.fitness) and self.fitness >= 0):
            raise ValueError(f"real fitness must be finite and >= 0, got {self.fitness}")


def input_width(g: Genotype) -> int:
    return N_XY + (N_Z if g.z is not None else 0) + (1 if g.rotation is not None else 0)


def normalize(g: Genotype) -> np.ndarray:
    """Genotype -> [0, 1]^n: xy alleles, then z alleles, then the rotation bit."""
    parts = [(np.asarray(g.xy, dtype=float) - XY_MIN) / (XY_MAX - XY_MIN)]
    if g.z is not None:
        parts.append((np.asarray(g.z, dtype=float) - Z_MIN) / (Z_MAX - Z_MIN))
    if g.rotation is not None:
        parts.append(np.array([1.0 if g.rotation else 0.0]))
    return np.concatenate(parts)


@dataclass(frozen=True)
class FitnessScale:
    """Min-max scaling between real fitness and the network's (0, 1) output."""

    lo: float
    hi: float

    @classmethod
    def of(cls, fitnesses: Sequence[float]) -> "FitnessScale":
        return cls(float(min(fitnesses)), float(max(fitnesses)))

    def to_unit(self, f):
        f = np.asarray(f, dtype=float)
        if self.hi > self.lo:
            return (f - self.lo) / (self.hi - self.lo)
        return np.full_like(f, 0.5)

    def from_unit(self, y):
        return self.lo + np.asarray(y, dtype=float) * (self.hi - self.lo)


@njit(cache=True)
def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


@njit(cache=True)
def _sgd(w1, b1, w2, b2, vw1, vb1, vw2, vb2, X, T, order, lr, momentum):
    # b2 and vb2 are length-1 arrays so they can be updated in place
    n_hidden, n_in = w1.shape
    h = np.empty(n_hidden)
    for e in range(order.shape[0]):
        for s in range(order.shape[1]):
            r = order[e, s]
            x = X[r]
            for j in range(n_hidden):
                acc = b1[j]
                for i in range(n_in):
                    acc += w1[j, i] * x[i]
                h[j] = 1.0 / (1.0 + math.exp(-acc))
            acc = b2[0]
            for j in range(n_hidden):
                acc += w2[j] * h[j]
            y = 1.0 / (1.0 + math.exp(-acc))
            d_out = (y - T[r]) * y * (1.0 - y)
            for j in range(n_hidden):
                d_h = d_out * w2[j] * h[j] * (1.0 - h[j])
                vw2[j] = momentum * vw2[j] - lr * d_out * h[j]
                w2[j] += vw2[j]
                vb1[j] = momentum * vb1[j] - lr * d_h
                b1[j] += vb1[j]
                for i in range(n_in):
                    vw1[j, i] = momentum * vw1[j, i] - lr * d_h * x[i]
                    w1[j, i] += vw1[j, i]
            vb2[0] = momentum * vb2[0] - lr * d_out
            b2[0] += vb2[0]


class SurrogateModel:
    def __init__(
        self,
        n_inputs: int,
        n_hidden: int = HIDDEN,
        learning_rate: float = LEARNING_RATE,
        theta: float = THETA,
        momentum: float = MOMENTUM,
    ):
        if learning_rate < 0:
            raise ValueError("learning rate must be non-negative")
        self.n_inputs = n_inputs
        self.n_hidden = n_hidden
        self.learning_rate = learning_rate
        self.theta = theta
        self.momentum = momentum
        self.w1 = np.zeros((n_hidden, n_inputs))
        self.b1 = np.full(n_hidden, float(theta))
        self.w2 = np.zeros(n_hidden)
        self.b2 = np.full(1, float(theta))
        self._reset_velocity()

    def _reset_velocity(self):
        self._v = [np.zeros_like(p) for p in self.params()]

    def params(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2]

    def reinitialize(self, rng: np.random.Generator) -> "SurrogateModel":
        """Weights uniform in [-0.5, 0.5], biases reset to theta."""
        self.w1[:] = rng.uniform(-INIT_RANGE, INIT_RANGE, size=self.w1.shape)
        self.w2[:] = rng.uniform(-INIT_RANGE, INIT_RANGE, size=self.w2.shape)
        self.b1[:] = self.theta
        self.b2[:] = self.theta
        self._reset_velocity()
        return self

    def forward(self, X: np.ndarray) -> np.ndarray:
        """Network output in (0, 1) for a batch (or a single input vector)."""
        X = np.asarray(X, dtype=float)
        h = 1.0 / (1.0 + np.exp(-(X @ self.w1.T + self.b1)))
        return 1.0 / (1.0 + np.exp(-(h @ self.w2 + self.b2[0])))

    def predict(self, genotypes: Genotype | Sequence[Genotype], scale: FitnessScale):
        if isinstance(genotypes, Genotype):
            return float(scale.from_unit(self.forward(normalize(genotypes))))
        X = np.array([normalize(g) for g in genotypes])
        return scale.from_unit(self.forward(X))

    def fit(self, X: np.ndarray, T: np.ndarray, epochs: int, rng: np.random.Generator) -> "SurrogateModel":
        """SGD over ``epochs`` shuffled passes; each pass visits every row once."""
        X = np.ascontiguousarray(X, dtype=float)
        T = np.ascontiguousarray(T, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_inputs or len(T) != len(X):
            raise ValueError(f"expected ({len(T)}, {self.n_inputs}) inputs, got {X.shape}")
        if len(X) == 0:
            raise ValueError("no training data")
        order = rng.permuted(np.tile(np.arange(len(X)), (epochs, 1)), axis=1)
        _sgd(*self.params(), *self._v, X, T, order, float(self.learning_rate), float(self.momentum))
        return self

    def train(self, records: Sequence[EvaluatedRecord], rng: np.random.Generator, epochs: int = EPOCHS) -> FitnessScale:
        """Fit to the records' min-max scaled fitness; returns the scale used."""
        if not records:
            raise ValueError("cannot train on an empty evaluated set")
        scale = FitnessScale.of([r.fitness for r in records])
        X = np.array([normalize(r.genotype) for r in records])
        self.fit(X, scale.to_unit([r.fitness for r in records]), epochs, rng)
        return scale

    def loss(self, x: np.ndarray, t: float) -> float:
        y = float(self.forward(x))
        return 0.5 * (y - t) ** 2

    def gradients(self, x: np.ndarray, t: float) -> list[np.ndarray]:
        """Backpropagated gradient of the loss, shaped like ``params()``."""
        x = np.asarray(x, dtype=float)
        h = 1.0 / (1.0 + np.exp(-(self.w1 @ x + self.b1)))
        y = 1.0 / (1.0 + np.exp(-(self.w2 @ h + self.b2[0])))
        d_out = (y - t) * y * (1.0 - y)
        d_h = d_out * self.w2 * h * (1.0 - h)
        return [np.outer(d_h, x), d_h, d_out * h, np.array([d_out])]

    def to_dict(self) -> dict:
        return {
            "format": "vawtevo-surrogate",
            "version": CHECKPOINT_VERSION,
            "layers": [self.n_inputs, self.n_hidden, 1],
            "learning_rate": self.learning_rate,
            "theta": self.theta,
            "momentum": self.momentum,
            "w1": self.w1.tolist(),
            "b1": self.b1.tolist(),
            "w2": self.w2.tolist(),
            "b2": self.b2.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SurrogateModel":
        if data.get("format") != "vawtevo-surrogate" or data.get("version") != CHECKPOINT_VERSION:
            raise ValueError("not a version-1 vawtevo surrogate checkpoint")
        n_in, n_hidden, _ = data["layers"]
        model = cls(n_in, n_hidden, data["learning_rate"], data["theta"], data["momentum"])
        model.w1[:] = np.array(data["w1"], dtype=float).reshape(n_hidden, n_in)
        model.b1[:] = data["b1"]
        model.w2[:] = data["w2"]
        model.b2[:] = data["b2"]
        return model

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "SurrogateModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def gradient_check(model: SurrogateModel, x: np.ndarray, t: float, h: float = 1e-5, floor: float = 1e-7) -> float:
    """Largest relative gap between backprop and central-difference gradients.

    The relative error of each weight is ``|a - n| / max(|a|, |n|, floor)``;
    the floor keeps weights with a vanishing gradient from dividing by zero.
    """
    analytic = model.gradients(x, t)
    worst = 0.0
    for p, g in zip(model.params(), analytic):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = model.loss(x, t)
            flat[i] = old - h
            down = model.loss(x, t)
            flat[i] = old
            numeric = (up - down) / (2 * h)
            err = abs(gflat[i] - numeric) / max(abs(gflat[i]), abs(numeric), floor)
            worst = max(worst, err)
    return worst
