"""
Federated training loop and personalization evaluation.
"""

import csv
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..seeding import get_rng
from ..streaming import EmptyGroupError, batch_cohorts, build_group_stream
from .algorithms import aggregate, client_update, lr_schedule, server_adam_step, server_sgd_step
from .lm import BigramLM, Model
from .models import (
    AdamState,
    ClientUpdate,
    DivergenceError,
    FedSimError,
    PersonalizationReport,
    PersonalizationResult,
    RoundConfig,
    RoundMetrics,
    TrainingResult,
)
from .text import ClientPipeline

logger = logging.getLogger(__name__)

ClientBatches = Tuple[bytes, List[np.ndarray]]


def _usable_clients(groups: Iterable, pipeline: ClientPipeline) -> Iterator[ClientBatches]:
    for group in groups:
        try:
            yield group.key, pipeline.batches(group)
        except EmptyGroupError:
            logger.warning("skipping client %r: no tokens", group.key)


def _client_stream(stream, pipeline: ClientPipeline) -> Iterator[ClientBatches]:
    """Endless sequence of clients, one shuffled pass after another."""
    while True:
        usable = 0
        for client in _usable_clients(stream, pipeline):
            usable += 1
            yield client
        if usable == 0:
            raise FedSimError("dataset has no client with usable examples")


def run_training(
    dataset,
    config: RoundConfig,
    rounds: int,
    model: Optional[Model] = None,
    init_params: Optional[np.ndarray] = None,
    clients: Optional[Iterator[ClientBatches]] = None,
    on_round: Optional[Callable[[RoundMetrics], None]] = None,
) -> TrainingResult:
    """
    Simulate ``rounds`` federated rounds.

    Clients are shuffled once (seeded) and visited in consecutive cohorts of
    ``config.cohort_size``. Each round broadcasts the server model, collects
    one update per cohort member, averages them in client-key order and takes
    a server step at the scheduled learning rate.

    Args:
        dataset: PartitionedDataset of training clients
        config: Algorithm, learning rates, batching and seed
        rounds: Number of rounds to run
        model: Reference model (defaults to a bigram LM over ``config.vocab_size``)
        init_params: Starting parameters (defaults to the "init" sub-stream)
        clients: Prepared ``(key, batches)`` stream replacing the dataset pipeline
        on_round: Callback invoked with each round's metrics

    Returns:
        TrainingResult with final parameters, per-round metrics and server state
    """
    model = model or BigramLM(config.vocab_size)
    if init_params is None:
        params = model.init_params(get_rng(config.seed, "init"))
    else:
        params = np.array(init_params, dtype=np.float64)
    state = AdamState.fresh(params.size) if config.server_optimizer == "adam" else None
    metrics: List[RoundMetrics] = []
    if rounds <= 0:
        return TrainingResult(params=params, metrics=metrics, state=state)

    if clients is None:
        if dataset.num_groups == 0:
            raise FedSimError("cannot train on a dataset without groups")
        stream = build_group_stream(
            dataset, shuffle_buffer=dataset.num_groups, seed=config.seed
        )
        pipeline = ClientPipeline.from_config(config, dataset.manifest.payload_format)
        clients = _client_stream(stream, pipeline)

    cohorts = batch_cohorts(clients, config.cohort_size)
    log_every = max(1, rounds // 10)
    executor = ThreadPoolExecutor(max_workers=config.workers) if config.workers > 1 else None
    try:
        for round_index in range(rounds):
            lr = lr_schedule(config.schedule, round_index)
            cohort = next(cohorts, None)
            if cohort is None:
                raise FedSimError("client stream ended before the last round")

            def work(client: ClientBatches, x=params, r=round_index) -> ClientUpdate:
                key, batches = client
                return client_update(model, x, batches, config.eta_c, config.algorithm, r, key)

            try:
                if executor is None:
                    updates = [work(client) for client in cohort.groups]
                else:
                    updates = list(executor.map(work, cohort.groups))
                delta = aggregate(updates)
                if config.server_optimizer == "adam":
                    state, params = server_adam_step(state, params, delta, lr)
                else:
                    params = server_sgd_step(params, delta, lr)
                if not np.all(np.isfinite(params)):
                    raise DivergenceError(round_index, b"<server>")
            except DivergenceError as exc:
                exc.metrics = list(metrics)
                raise

            losses = [u.mean_loss for u in sorted(updates, key=lambda u: u.client_key)]
            record = RoundMetrics(
                round=round_index,
                algorithm=config.algorithm,
                lr=lr,
                mean_loss=float(np.mean(losses)),
            )
            metrics.append(record)
            if on_round is not None:
                on_round(record)
            if round_index % log_every == 0 or round_index == rounds - 1:
                logger.info(
                    "round %d/%d (%s): lr=%.3g loss=%.4f",
                    round_index + 1,
                    rounds,
                    config.algorithm,
                    lr,
                    record.mean_loss,
                )
    finally:
        if executor is not None:
            executor.shutdown()
    return TrainingResult(params=params, metrics=metrics, state=state)


def personalize_and_eval(
    model: Model,
    params: np.ndarray,
    batches: Sequence,
    eta_c: float,
    epochs: int = 1,
    client_key: bytes = b"",
) -> Tuple[float, float]:
    """
    Fine-tune on one client's batches and report ``(pre_loss, post_loss)``.

    Both losses are the mean over the same batches; fine-tuning walks the
    batches in order, ``epochs`` times, with plain SGD.
    """
    if not batches:
        raise EmptyGroupError(f"client {client_key!r} has no batches")
    pre_loss = _mean_loss(model, params, batches, client_key)
    x = np.array(params, dtype=np.float64)
    for _ in range(epochs):
        for batch in batches:
            loss, grad = model.loss_and_grad(x, batch)
            if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
                raise DivergenceError(-1, client_key)
            x = x - eta_c * grad
    if epochs <= 0:
        return pre_loss, pre_loss
    return pre_loss, _mean_loss(model, x, batches, client_key)


def _mean_loss(model: Model, params: np.ndarray, batches: Sequence, client_key: bytes) -> float:
    losses = [model.loss_and_grad(params, batch)[0] for batch in batches]
    loss = float(np.mean(losses))
    if not np.isfinite(loss):
        raise DivergenceError(-1, client_key)
    return loss


def evaluate_personalization(
    dataset,
    params: np.ndarray,
    config: RoundConfig,
    model: Optional[Model] = None,
    epochs: int = 1,
    max_clients: Optional[int] = None,
) -> PersonalizationReport:
    """
    Pre/post personalization losses over the clients of ``dataset``.

    Clients are visited in stream order without shuffling; each is prepared
    exactly as in training and fine-tuned with ``config.eta_c``.
    """
    model = model or BigramLM(config.vocab_size)
    stream = build_group_stream(dataset, shuffle_buffer=0, seed=config.seed)
    pipeline = ClientPipeline.from_config(config, dataset.manifest.payload_format)
    results: List[PersonalizationResult] = []
    for key, batches in _usable_clients(stream, pipeline):
        pre, post = personalize_and_eval(model, params, batches, config.eta_c, epochs, key)
        results.append(PersonalizationResult(client_key=key, pre_loss=pre, post_loss=post))
        if max_clients is not None and len(results) >= max_clients:
            break
    report = PersonalizationReport.from_results(results)
    logger.info(
        "personalized %d clients: median loss %.4f -> %.4f",
        len(results),
        report.pre_summary.p50,
        report.post_summary.p50,
    )
    return report


def write_metrics_csv(metrics: Sequence[RoundMetrics], path: Union[str, Path]) -> Path:
    path = Path(path)
    with io.open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["round", "algorithm", "lr", "mean_loss"])
        for m in metrics:
            writer.writerow([m.round, m.algorithm, repr(m.lr), repr(m.mean_loss)])
    return path


def write_personalization_csv(report: PersonalizationReport, path: Union[str, Path]) -> Path:
    path = Path(path)
    with io.open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["client_key", "pre_loss", "post_loss"])
        for r in report.results:
            key = r.client_key.decode("utf-8", errors="backslashreplace")
            writer.writerow([key, repr(r.pre_loss), repr(r.post_loss)])
    return path


def write_personalization_json(report: PersonalizationReport, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
