"""
Client and server optimizer steps plus learning-rate schedules.
"""

import math
from typing import List, Sequence, Tuple

import numpy as np

from .lm import Model
from .models import (
    ALGORITHMS,
    AdamState,
    ClientUpdate,
    DimensionMismatchError,
    DivergenceError,
    FedSimError,
    NonFiniteError,
    ScheduleError,
    ScheduleSpec,
)

EXPONENTIAL_FLOOR = 1e-3


def _finite(loss: float, grad: np.ndarray) -> bool:
    return math.isfinite(loss) and bool(np.all(np.isfinite(grad)))


def client_update(
    model: Model,
    params: np.ndarray,
    batches: Sequence,
    eta_c: float,
    mode: str,
    round_index: int = 0,
    client_key: bytes = b"",
) -> ClientUpdate:
    """
    Local work of one client.

    ``fedavg`` runs one SGD step per batch starting from ``params`` and returns
    ``params - x_final``. ``fedsgd`` evaluates every batch gradient at
    ``params`` and returns their mean. ``mean_loss`` averages each batch loss
    at the model in force when that batch was processed.
    """
    if mode not in ALGORITHMS:
        raise FedSimError(f"unknown algorithm {mode!r}")
    if len(batches) < 1:
        raise FedSimError("client_update needs at least one batch")

    losses: List[float] = []
    delta = np.zeros_like(params, dtype=np.float64)
    if mode == "fedavg":
        x = params
        for batch in batches:
            loss, grad = model.loss_and_grad(x, batch)
            if not _finite(loss, grad):
                raise DivergenceError(round_index, client_key)
            losses.append(loss)
            delta += eta_c * grad
            x = params - delta
    else:
        for batch in batches:
            loss, grad = model.loss_and_grad(params, batch)
            if not _finite(loss, grad):
                raise DivergenceError(round_index, client_key)
            losses.append(loss)
            delta += grad
        delta /= len(batches)

    return ClientUpdate(
        delta=delta,
        mean_loss=float(np.mean(losses)),
        num_batches=len(batches),
        client_key=client_key,
    )


def aggregate(updates: Sequence[ClientUpdate]) -> np.ndarray:
    """Uniform mean of client deltas, summed serially in ascending client-key order."""
    if not updates:
        raise FedSimError("cannot aggregate an empty cohort")
    ordered = sorted(updates, key=lambda update: update.client_key)
    shape = ordered[0].delta.shape
    total = np.zeros(shape, dtype=np.float64)
    for update in ordered:
        if update.delta.shape != shape:
            raise DimensionMismatchError(
                f"client {update.client_key!r} sent delta of shape {update.delta.shape}, expected {shape}"
            )
        total += update.delta
    return total / len(ordered)


def _check_step_inputs(params: np.ndarray, delta: np.ndarray, lr: float) -> None:
    if params.shape != delta.shape:
        raise DimensionMismatchError(f"params {params.shape} and delta {delta.shape} differ")
    if not lr >= 0:
        raise FedSimError(f"server learning rate must be >= 0, got {lr}")
    if not (np.all(np.isfinite(params)) and np.all(np.isfinite(delta)) and math.isfinite(lr)):
        raise NonFiniteError("server step received non-finite values")


def server_adam_step(
    state: AdamState, params: np.ndarray, delta: np.ndarray, lr: float
) -> Tuple[AdamState, np.ndarray]:
    """Treat ``delta`` as a gradient estimate and take one bias-corrected Adam step."""
    _check_step_inputs(params, delta, lr)
    if state.m.shape != params.shape or state.v.shape != params.shape:
        raise DimensionMismatchError("Adam moments do not match the parameter shape")
    step = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * delta
    v = state.beta2 * state.v + (1.0 - state.beta2) * delta * delta
    m_hat = m / (1.0 - state.beta1**step)
    v_hat = v / (1.0 - state.beta2**step)
    new_params = params - lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    new_state = AdamState(
        step=step, m=m, v=v, beta1=state.beta1, beta2=state.beta2, epsilon=state.epsilon
    )
    return new_state, new_params


def server_sgd_step(params: np.ndarray, delta: np.ndarray, lr: float) -> np.ndarray:
    _check_step_inputs(params, delta, lr)
    return params - lr * delta


def lr_schedule(spec: ScheduleSpec, round_index: int) -> float:
    """
    Server learning rate at ``round_index``.

    Warmup schedules ramp linearly from 0 over the warmup rounds, then decay:
    cosine reaches 0 at the final round, exponential reaches
    ``eta_max * 1e-3`` there.
    """
    total = spec.total_rounds
    if not 0 <= round_index < total:
        raise ScheduleError(f"round {round_index} is outside [0, {total})")
    if spec.kind == "constant":
        return spec.eta_max

    warmup = spec.warmup_rounds
    if round_index < warmup:
        return spec.eta_max * round_index / warmup
    span = total - 1 - warmup
    if span <= 0:
        return spec.eta_max
    progress = round_index - warmup
    if spec.kind == "warmup_cosine":
        return spec.eta_max * 0.5 * (1.0 + math.cos(math.pi * progress / span))
    rho = EXPONENTIAL_FLOOR ** (1.0 / span)
    return spec.eta_max * rho**progress
