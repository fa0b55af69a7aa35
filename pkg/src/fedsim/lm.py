"""
Reference models.

Every model exposes ``dimension``, ``init_params(rng)`` and
``loss_and_grad(params, batch) -> (loss, grad)`` over a flat float64 vector.
"""

from typing import Protocol, Tuple

import numpy as np

from .models import DimensionMismatchError, NoPredictionPositionsError

PAD_ID = 0


class Model(Protocol):
    dimension: int

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        ...

    def loss_and_grad(self, params: np.ndarray, batch) -> Tuple[float, np.ndarray]:
        ...


class BigramLM:
    """
    Softmax bigram language model.

    ``params`` reshaped to ``V x V`` holds in row ``r`` the next-token logits
    after token ``r``. The loss is the mean cross-entropy over positions whose
    target is not padding.
    """

    def __init__(self, vocab_size: int, init_scale: float = 0.01):
        if vocab_size < 2:
            raise DimensionMismatchError(f"vocab_size must be >= 2, got {vocab_size}")
        self.vocab_size = vocab_size
        self.dimension = vocab_size * vocab_size
        self.init_scale = init_scale

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        return self.init_scale * rng.standard_normal(self.dimension)

    def _check(self, params: np.ndarray) -> np.ndarray:
        if params.ndim != 1 or params.size != self.dimension:
            raise DimensionMismatchError(
                f"expected {self.dimension} parameters for V={self.vocab_size}, got {params.size}"
            )
        return params.reshape(self.vocab_size, self.vocab_size)

    def _positions(self, batch) -> Tuple[np.ndarray, np.ndarray]:
        sequences = np.atleast_2d(np.asarray(batch, dtype=np.int64))
        inputs = sequences[:, :-1].ravel()
        targets = sequences[:, 1:].ravel()
        mask = targets != PAD_ID
        if not mask.any():
            raise NoPredictionPositionsError("batch has no non-pad prediction positions")
        if sequences.size and (sequences.min() < 0 or sequences.max() >= self.vocab_size):
            raise DimensionMismatchError(f"token ids must lie in [0, {self.vocab_size})")
        return inputs[mask], targets[mask]

    def loss(self, params: np.ndarray, batch) -> float:
        weights = self._check(params)
        inputs, targets = self._positions(batch)
        logits = weights[inputs]
        shift = logits.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(logits - shift).sum(axis=1)) + shift[:, 0]
        return float(np.mean(log_norm - logits[np.arange(len(targets)), targets]))

    def loss_and_grad(self, params: np.ndarray, batch) -> Tuple[float, np.ndarray]:
        weights = self._check(params)
        inputs, targets = self._positions(batch)
        n = len(targets)
        rows = np.arange(n)

        logits = weights[inputs]
        shift = logits.max(axis=1, keepdims=True)
        exp = np.exp(logits - shift)
        totals = exp.sum(axis=1, keepdims=True)
        log_norm = np.log(totals[:, 0]) + shift[:, 0]
        loss = float(np.mean(log_norm - logits[rows, targets]))

        dlogits = exp / totals
        dlogits[rows, targets] -= 1.0
        dlogits /= n
        grad = np.zeros_like(weights)
        np.add.at(grad, inputs, dlogits)
        return loss, grad.ravel()


class LinearRegression:
    """Least squares toy: batches are ``(X, y)`` and the loss is ``0.5 * mean((Xw - y)^2)``."""

    def __init__(self, dimension: int):
        self.dimension = dimension

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        return np.zeros(self.dimension)

    def loss_and_grad(self, params: np.ndarray, batch) -> Tuple[float, np.ndarray]:
        features, targets = batch
        features = np.atleast_2d(np.asarray(features, dtype=np.float64))
        targets = np.asarray(targets, dtype=np.float64).ravel()
        if params.shape != (self.dimension,) or features.shape[1] != self.dimension:
            raise DimensionMismatchError(
                f"expected {self.dimension} features, got params {params.shape} "
                f"and batch {features.shape}"
            )
        if len(targets) == 0:
            raise NoPredictionPositionsError("empty regression batch")
        residual = features @ params - targets
        loss = 0.5 * float(np.mean(residual * residual))
        grad = features.T @ residual / len(targets)
        return loss, grad
