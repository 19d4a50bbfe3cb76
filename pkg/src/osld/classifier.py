"""Softmax classifier head over fixed embedding vectors.

The head is linear by default; a one-hidden-layer (tanh) variant and an
input projection (used during adaptation) are config-gated. Training is
minibatch AdamW with decoupled weight decay and linear warmup, fully
deterministic for a given seed.

Checkpoint file: magic ``OSLDHED1``, u32 LE header length, JSON header
(classes, dims, config echo, array shapes), then the float32 LE
parameter payload in header order.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from osld.errors import EmbeddingFormatError, OsldError

HEAD_MAGIC = b"OSLDHED1"

# callback contract for an extra loss term during retraining:
# (global_row_indices, projected_batch) -> (loss, grad_wrt_projected) or None
ExtraTerm = Callable[[np.ndarray, np.ndarray], "tuple[float, np.ndarray] | None"]


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer settings; defaults target a linear head at desk scale."""

    learning_rate: float = 1e-2
    weight_decay: float = 0.01
    warmup_steps: int = 100
    epochs: int = 5
    batch_size: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.weight_decay < 0:
            raise OsldError("learning_rate must be > 0 and weight_decay >= 0")
        if self.epochs < 1 or self.batch_size < 1 or self.warmup_steps < 0:
            raise OsldError("epochs/batch_size must be >= 1 and warmup_steps >= 0")

    @classmethod
    def finetune_defaults(cls, seed: int = 0) -> "TrainConfig":
        """Settings matching common transformer fine-tuning recipes."""
        return cls(learning_rate=2e-5, weight_decay=0.01, warmup_steps=100,
                   epochs=5, batch_size=16, seed=seed)


def _init_matrix(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(cols)
    return rng.uniform(-bound, bound, size=(rows, cols))


def _init_vector(rng: np.random.Generator, n: int, fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=n)


class SoftmaxClassifier:
    """Trainable head mapping embeddings to class logits.

    Parameters are held in float64 for numerically clean gradients; the
    ``W``/``b`` properties expose the float32 views that checkpoints store.
    """

    def __init__(
        self,
        classes: Sequence[str],
        dim: int,
        hidden_size: int | None = None,
        projection: bool = False,
        seed: int = 0,
    ):
        if len(classes) < 1:
            raise OsldError("need at least one class")
        if len(set(classes)) != len(classes):
            raise OsldError("duplicate class names")
        if dim < 1:
            raise OsldError("embedding dimension must be >= 1")
        self.class_order: tuple[str, ...] = tuple(classes)
        self.dim = dim
        self.hidden_size = hidden_size
        self.has_projection = projection
        self.seed = seed

        rng = np.random.default_rng(seed)
        self.params: dict[str, np.ndarray] = {}
        if projection:
            self.params["P"] = np.eye(dim, dtype=np.float64)
        din = dim
        if hidden_size:
            self.params["H"] = _init_matrix(rng, hidden_size, dim)
            self.params["h0"] = _init_vector(rng, hidden_size, dim)
            din = hidden_size
        self.params["W"] = _init_matrix(rng, len(classes), din)
        self.params["b"] = _init_vector(rng, len(classes), din)

    # -- basic views -------------------------------------------------

    @property
    def n_classes(self) -> int:
        return len(self.class_order)

    @property
    def W(self) -> np.ndarray:
        return self.params["W"].astype(np.float32)

    @property
    def b(self) -> np.ndarray:
        return self.params["b"].astype(np.float32)

    def enable_projection(self) -> None:
        """Attach an identity-initialized input projection if absent."""
        if not self.has_projection:
            self.has_projection = True
            self.params = {"P": np.eye(self.dim, dtype=np.float64), **self.params}

    def _check_finite(self) -> None:
        for name, arr in self.params.items():
            if not np.isfinite(arr).all():
                raise OsldError(f"non-finite values in parameter {name!r}")

    # -- forward / backward ------------------------------------------

    def _as_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise OsldError(
                f"input dimension {X.shape[-1]} does not match head dimension {self.dim}"
            )
        return X

    def _forward(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Returns (projected, pre-logit activation, logits)."""
        Z0 = X @ self.params["P"].T if self.has_projection else X
        if self.hidden_size:
            A = np.tanh(Z0 @ self.params["H"].T + self.params["h0"])
        else:
            A = Z0
        logits = A @ self.params["W"].T + self.params["b"]
        return Z0, A, logits

    def _backward(
        self,
        X: np.ndarray,
        Z0: np.ndarray,
        A: np.ndarray,
        dlogits: np.ndarray,
        dZ0_extra: np.ndarray | None = None,
    ) -> dict[str, np.ndarray]:
        grads: dict[str, np.ndarray] = {}
        grads["W"] = dlogits.T @ A
        grads["b"] = dlogits.sum(axis=0)
        dA = dlogits @ self.params["W"]
        if self.hidden_size:
            dpre = dA * (1.0 - A * A)
            grads["H"] = dpre.T @ Z0
            grads["h0"] = dpre.sum(axis=0)
            dZ0 = dpre @ self.params["H"]
        else:
            dZ0 = dA
        if dZ0_extra is not None:
            dZ0 = dZ0 + dZ0_extra
        if self.has_projection:
            grads["P"] = dZ0.T @ X
        return grads

    # -- inference ----------------------------------------------------

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        """Logits W.(phi(x)) + b for one vector or a batch."""
        X = self._as_batch(X)
        return self._forward(X)[2]

    def logits(self, e: np.ndarray) -> np.ndarray:
        out = self.decision_function(e)
        return out[0] if np.asarray(e).ndim == 1 else out

    def project(self, X: np.ndarray) -> np.ndarray:
        """Representation fed to both the head and similarity terms."""
        return self._forward(self._as_batch(X))[0]

    def predict(self, X: np.ndarray) -> list[str]:
        logits = self.decision_function(X)
        return [self.class_order[i] for i in np.argmax(logits, axis=1)]

    def predict_one(self, e: np.ndarray) -> str:
        return self.predict(e)[0]

    def accuracy(self, X: np.ndarray, y: np.ndarray) -> float:
        logits = self.decision_function(X)
        return float(np.mean(np.argmax(logits, axis=1) == np.asarray(y)))

    # -- training ------------------------------------------------------

    def ce_loss_and_grad(
        self, X: np.ndarray, y: np.ndarray
    ) -> tuple[float, dict[str, np.ndarray]]:
        """Mean softmax cross-entropy over the batch with analytic grads."""
        X = self._as_batch(X)
        y = np.asarray(y, dtype=np.int64)
        if y.min(initial=0) < 0 or y.max(initial=0) >= self.n_classes:
            raise OsldError("label index out of range")
        Z0, A, logits = self._forward(X)
        loss, dlogits = softmax_ce(logits, y)
        grads = self._backward(X, Z0, A, dlogits)
        return loss, grads

    def fit(
        self,
        X: np.ndarray,
        y: np.ndarray,
        config: TrainConfig,
        extra_term: ExtraTerm | None = None,
    ) -> list[float]:
        """Minibatch AdamW training; returns the per-step loss curve.

        ``extra_term`` lets adaptation add a loss on the projected batch;
        its gradient enters only through the projection.
        """
        X = self._as_batch(X)
        y = np.asarray(y, dtype=np.int64)
        if X.shape[0] != y.shape[0]:
            raise OsldError("X and y row counts differ")
        if np.unique(y).size < 2:
            raise OsldError("training data covers a single class")
        if y.min() < 0 or y.max() >= self.n_classes:
            raise OsldError("label index out of range")

        opt = AdamW(self.params, config)
        rng = np.random.default_rng(config.seed)
        n = X.shape[0]
        curve: list[float] = []
        for _ in range(config.epochs):
            order = rng.permutation(n)
            for start in range(0, n, config.batch_size):
                rows = order[start : start + config.batch_size]
                Xb, yb = X[rows], y[rows]
                Z0, A, logits = self._forward(Xb)
                loss, dlogits = softmax_ce(logits, yb)
                dZ0_extra = None
                if extra_term is not None:
                    added = extra_term(rows, Z0)
                    if added is not None:
                        extra_loss, dZ0_extra = added
                        loss += extra_loss
                grads = self._backward(Xb, Z0, A, dlogits, dZ0_extra)
                opt.step(grads)
                if not math.isfinite(loss):
                    raise OsldError("non-finite training loss")
                curve.append(loss)
        self._check_finite()
        return curve

    # -- persistence ----------------------------------------------------

    def save(self, path: str | Path, config: TrainConfig | None = None) -> None:
        names = list(self.params.keys())
        header = {
            "classes": list(self.class_order),
            "dim": self.dim,
            "hidden_size": self.hidden_size,
            "projection": self.has_projection,
            "seed": self.seed,
            "config": asdict(config) if config else None,
            "arrays": [[name, list(self.params[name].shape)] for name in names],
        }
        blob = json.dumps(header, sort_keys=True).encode("utf-8")
        with Path(path).open("wb") as fh:
            fh.write(HEAD_MAGIC)
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            for name in names:
                fh.write(np.ascontiguousarray(self.params[name], dtype="<f4").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "SoftmaxClassifier":
        blob = Path(path).read_bytes()
        if blob[:8] != HEAD_MAGIC:
            raise EmbeddingFormatError(f"{path}: bad checkpoint magic {blob[:8]!r}")
        (hlen,) = struct.unpack("<I", blob[8:12])
        header = json.loads(blob[12 : 12 + hlen].decode("utf-8"))
        head = cls(
            classes=header["classes"],
            dim=header["dim"],
            hidden_size=header["hidden_size"],
            projection=header["projection"],
            seed=header["seed"],
        )
        offset = 12 + hlen
        for name, shape in header["arrays"]:
            count = int(np.prod(shape))
            raw = blob[offset : offset + 4 * count]
            if len(raw) != 4 * count:
                raise EmbeddingFormatError(f"{path}: truncated parameter payload")
            head.params[name] = (
                np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float64)
            )
            offset += 4 * count
        return head


def softmax_ce(logits: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and gradient w.r.t. logits (stable log-softmax)."""
    if logits.shape[0] == 0:
        raise OsldError("empty batch")
    shifted = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logsumexp
    n = logits.shape[0]
    loss = float(-logp[np.arange(n), y].mean())
    dlogits = np.exp(logp)
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    return loss, dlogits


class AdamW(object):
    """Decoupled-weight-decay Adam over a dict of float64 arrays."""

    def __init__(self, params: dict[str, np.ndarray], config: TrainConfig,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.config = config
        self.betas = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def _lr(self) -> float:
        cfg = self.config
        if cfg.warmup_steps > 0:
            return cfg.learning_rate * min(1.0, self.t / cfg.warmup_steps)
        return cfg.learning_rate

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        lr = self._lr()
        b1, b2 = self.betas
        wd = self.config.weight_decay
        for name, g in grads.items():
            p = self.params[name]
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            mhat = m / (1 - b1 ** self.t)
            vhat = v / (1 - b2 ** self.t)
            p -= lr * mhat / (np.sqrt(vhat) + self.eps)
            p -= lr * wd * p
