"""Small numpy models with analytic backprop.

``Mlp`` is a one-hidden-layer tanh perceptron with a scalar linear output.
It backs every learned component: the reward aggregator f_agg, the actor
scorer, and the shared scorer g inside the judge and meta-judge, whose
preference logit is the structurally antisymmetric ``g(a) - g(b)``.

Parameters are exchanged as one flat vector (``flat()`` / ``with_flat()``) so
optimisers and the finite-difference checker treat every model alike, and are
persisted as JSON arrays keyed by layer name.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Self

import numpy as np
from pydantic import BaseModel

from .artifacts import write_atomic
from .errors import InputError, InvariantError

ORIGIN = "training"

LAYER_NAMES = ("hidden.weight", "hidden.bias", "output.weight", "output.bias")


class MlpFile(BaseModel):
    """On-disk parameter file."""

    kind: str
    inputs: int
    hidden: int
    layers: dict[str, list[list[float]] | list[float]]


@dataclass(frozen=True, eq=False)
class Mlp:
    """x -> w2 . tanh(W1 x + b1) + b2."""

    w1: np.ndarray  # (hidden, inputs)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden,)
    b2: np.ndarray  # (1,)

    @classmethod
    def zeros(cls, inputs: int, hidden: int) -> Self:
        return cls(np.zeros((hidden, inputs)), np.zeros(hidden), np.zeros(hidden), np.zeros(1))

    @classmethod
    def init(cls, rng: np.random.Generator, inputs: int, hidden: int, scale: float = 0.5) -> Self:
        """Gaussian init scaled by fan-in; output bias starts at zero."""
        return cls(
            rng.normal(0.0, scale / np.sqrt(inputs), size=(hidden, inputs)),
            np.zeros(hidden),
            rng.normal(0.0, scale / np.sqrt(hidden), size=hidden),
            np.zeros(1),
        )

    @property
    def inputs(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    @property
    def size(self) -> int:
        return self.w1.size + self.b1.size + self.w2.size + 1

    def flat(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.b1, self.w2, self.b2])

    def with_flat(self, theta: np.ndarray) -> Self:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.size,):
            raise InvariantError(
                f"parameter vector has shape {theta.shape}, expected ({self.size},)", origin=ORIGIN
            )
        h, d = self.w1.shape
        i = h * d
        return type(self)(
            theta[:i].reshape(h, d).copy(),
            theta[i : i + h].copy(),
            theta[i + h : i + 2 * h].copy(),
            theta[i + 2 * h :].copy(),
        )

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.flat())))

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[1] != self.inputs:
            raise InvariantError(
                f"input has {x.shape[1]} features, model expects {self.inputs}", origin=ORIGIN
            )
        return x

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Scores for a batch ``(n, inputs)``; returns shape ``(n,)``."""
        x = self._check_input(x)
        hidden = np.tanh(x @ self.w1.T + self.b1)
        return hidden @ self.w2 + self.b2[0]

    def backward(self, x: np.ndarray, dy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vector-Jacobian product.

        Returns ``(d_theta, d_x)`` for upstream gradient ``dy`` of shape (n,),
        with ``d_theta`` laid out like ``flat()``.
        """
        x = self._check_input(x)
        dy = np.asarray(dy, dtype=float).reshape(-1)
        hidden = np.tanh(x @ self.w1.T + self.b1)
        g_w2 = hidden.T @ dy
        g_b2 = np.array([dy.sum()])
        dz = (dy[:, None] * self.w2[None, :]) * (1.0 - hidden**2)
        g_w1 = dz.T @ x
        g_b1 = dz.sum(axis=0)
        d_x = dz @ self.w1
        return np.concatenate([g_w1.ravel(), g_b1, g_w2, g_b2]), d_x

    def step(self, grad: np.ndarray, lr: float) -> Self:
        """One plain gradient-descent update; returns a new model."""
        return self.with_flat(self.flat() - lr * grad)

    def to_file(self, kind: str) -> MlpFile:
        return MlpFile(
            kind=kind,
            inputs=self.inputs,
            hidden=self.hidden,
            layers={
                "hidden.weight": self.w1.tolist(),
                "hidden.bias": self.b1.tolist(),
                "output.weight": self.w2.tolist(),
                "output.bias": self.b2.tolist(),
            },
        )

    @classmethod
    def from_file(cls, data: MlpFile) -> Self:
        missing = [name for name in LAYER_NAMES if name not in data.layers]
        if missing:
            raise InputError(f"parameter file lacks layers {missing}", origin=ORIGIN)
        model = cls(
            np.asarray(data.layers["hidden.weight"], dtype=float).reshape(data.hidden, data.inputs),
            np.asarray(data.layers["hidden.bias"], dtype=float).reshape(data.hidden),
            np.asarray(data.layers["output.weight"], dtype=float).reshape(data.hidden),
            np.asarray(data.layers["output.bias"], dtype=float).reshape(1),
        )
        if not model.is_finite():
            raise InvariantError("parameter file holds non-finite values", origin=ORIGIN)
        return model

    def save(self, path: Path, kind: str) -> Path:
        return write_atomic(path, self.to_file(kind).model_dump_json(indent=2) + "\n")

    @classmethod
    def load(cls, path: Path) -> Self:
        if not path.exists():
            raise InputError("file not found", origin=ORIGIN, path=str(path))
        try:
            return cls.from_file(MlpFile.model_validate_json(path.read_text(encoding="utf-8")))
        except ValueError as e:
            if isinstance(e, InvariantError):
                raise
            raise InputError(f"invalid parameter file ({e})", origin=ORIGIN, path=str(path)) from e


class AggregatorParams(Mlp):
    """f_agg: reward vector (5) -> scalar reward."""


class ActorPolicy(Mlp):
    """pi_theta: candidate feature vector -> score."""


@dataclass(frozen=True, eq=False)
class PairwiseModel:
    """Preference logit M(a, b) = g(a) - g(b) over scalar rewards."""

    scorer: Mlp

    @classmethod
    def init(cls, rng: np.random.Generator, hidden: int) -> Self:
        return cls(Mlp.init(rng, 1, hidden, scale=1.0))

    @property
    def size(self) -> int:
        return self.scorer.size

    def flat(self) -> np.ndarray:
        return self.scorer.flat()

    def with_flat(self, theta: np.ndarray) -> Self:
        return type(self)(self.scorer.with_flat(theta))

    def logits(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=float).reshape(-1, 1)
        b = np.asarray(b, dtype=float).reshape(-1, 1)
        return self.scorer.forward(a) - self.scorer.forward(b)

    def logit(self, a: float, b: float) -> float:
        return float(self.logits(np.array([a]), np.array([b]))[0])

    def backward(
        self, a: np.ndarray, b: np.ndarray, dlogit: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Gradients of sum(dlogit * M(a, b)) wrt parameters, a and b."""
        a = np.asarray(a, dtype=float).reshape(-1, 1)
        b = np.asarray(b, dtype=float).reshape(-1, 1)
        dlogit = np.asarray(dlogit, dtype=float).reshape(-1)
        g_a, d_a = self.scorer.backward(a, dlogit)
        g_b, d_b = self.scorer.backward(b, -dlogit)
        return g_a + g_b, d_a[:, 0], d_b[:, 0]

    def step(self, grad: np.ndarray, lr: float) -> Self:
        return type(self)(self.scorer.step(grad, lr))

    def save(self, path: Path, kind: str) -> Path:
        return self.scorer.save(path, kind)

    @classmethod
    def load(cls, path: Path) -> Self:
        return cls(Mlp.load(path))


class JudgeModel(PairwiseModel):
    """M_theta, distilled from the meta-judge."""


class MetaJudgeModel(PairwiseModel):
    """M_phi, trained on Elo-preferred reward pairs."""

