"""
Learning-rate grid search and the batches-per-client ablation.
"""

import logging
from dataclasses import asdict, dataclass, replace
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from ..stats import QuantileSummary
from .lm import Model
from .models import DivergenceError, FedSimError, NonFiniteError, RoundConfig, ScheduleSpec
from .training import evaluate_personalization, run_training

logger = logging.getLogger(__name__)

LR_GRID = (1e-4, 1e-3, 1e-2, 1e-1, 1e0, 1e1)
TAU_GRID = (1, 4, 16, 64)
BUDGET_MODES = ("rounds", "examples")


@dataclass
class SweepPoint:
    eta_s: float
    eta_c: float
    mean_loss: Optional[float]
    diverged: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class SweepResult:
    points: List[SweepPoint]
    best: SweepPoint


def lr_sweep(
    dataset,
    config: RoundConfig,
    rounds: int,
    server_lrs: Sequence[float] = LR_GRID,
    client_lrs: Optional[Sequence[float]] = None,
    model: Optional[Model] = None,
) -> SweepResult:
    """
    Serial grid search over server (and, for FedAvg, client) learning rates.

    Each point is scored by its mean training loss over all rounds; divergent
    points are recorded and skipped.
    """
    if rounds < 1:
        raise FedSimError("a sweep needs at least one round")
    if client_lrs is None:
        client_lrs = LR_GRID if config.algorithm == "fedavg" else (config.eta_c,)

    points: List[SweepPoint] = []
    for eta_s in server_lrs:
        for eta_c in client_lrs:
            point_config = replace(
                config,
                eta_c=eta_c,
                schedule=replace(config.schedule, eta_max=eta_s, total_rounds=rounds),
            )
            try:
                result = run_training(dataset, point_config, rounds, model=model)
                mean_loss = float(np.mean([m.mean_loss for m in result.metrics]))
                point = SweepPoint(eta_s, eta_c, mean_loss)
            except (DivergenceError, NonFiniteError):
                point = SweepPoint(eta_s, eta_c, None, diverged=True)
            logger.info(
                "sweep eta_s=%g eta_c=%g: %s",
                eta_s,
                eta_c,
                "diverged" if point.diverged else f"loss {point.mean_loss:.4f}",
            )
            points.append(point)

    finished = [p for p in points if not p.diverged and np.isfinite(p.mean_loss)]
    if not finished:
        raise FedSimError("every grid point diverged")
    return SweepResult(points=points, best=min(finished, key=lambda p: p.mean_loss))


@dataclass
class TauResult:
    tau: int
    rounds: int
    pre_loss: QuantileSummary
    post_loss: QuantileSummary

    def to_row(self) -> Dict[str, Any]:
        row: Dict[str, Any] = {"tau": self.tau, "rounds": self.rounds}
        for prefix, summary in (("pre", self.pre_loss), ("post", self.post_loss)):
            for name, value in summary.to_dict().items():
                row[f"{prefix}_{name}"] = value
        return row


def tau_ablation(
    train_dataset,
    eval_dataset,
    config: RoundConfig,
    rounds: int,
    taus: Sequence[int] = TAU_GRID,
    mode: str = "rounds",
    model: Optional[Model] = None,
    max_eval_clients: Optional[int] = None,
) -> List[TauResult]:
    """
    Train once per ``tau`` and personalize on held-out clients.

    ``rounds`` mode keeps the communication rounds fixed; ``examples`` mode
    scales rounds by ``max(taus) / tau`` so every run sees as many examples.
    Evaluation always uses the batching of ``config`` so every tau is scored
    on the same client batches.
    """
    if mode not in BUDGET_MODES:
        raise FedSimError(f"unknown budget mode {mode!r}; expected one of {', '.join(BUDGET_MODES)}")
    largest = max(taus)
    results: List[TauResult] = []
    for tau in taus:
        run_rounds = rounds if mode == "rounds" else rounds * largest // tau
        tau_config = replace(
            config,
            batches_per_client=tau,
            examples_per_client=None,
            schedule=ScheduleSpec(
                kind=config.schedule.kind,
                eta_max=config.schedule.eta_max,
                total_rounds=max(1, run_rounds),
                warmup_fraction=config.schedule.warmup_fraction,
            ),
        )
        trained = run_training(train_dataset, tau_config, run_rounds, model=model)
        report = evaluate_personalization(
            eval_dataset, trained.params, config, model=model, max_clients=max_eval_clients
        )
        results.append(TauResult(tau, run_rounds, report.pre_summary, report.post_summary))
        logger.info(
            "tau=%d (%d rounds): median post-personalization loss %.4f",
            tau,
            run_rounds,
            report.post_summary.p50,
        )
    return results
