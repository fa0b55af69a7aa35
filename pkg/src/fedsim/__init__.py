"""
Federated training simulation module.

FedAvg and FedSGD over a group stream with client SGD and a server Adam (or
SGD) optimizer, learning-rate schedules, personalization evaluation, a
synthetic heterogeneous task, checkpoints and tuning sweeps.
"""

from .algorithms import (
    aggregate,
    client_update,
    lr_schedule,
    server_adam_step,
    server_sgd_step,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .lm import PAD_ID, BigramLM, LinearRegression, Model
from .models import (
    ALGORITHMS,
    SCHEDULES,
    SERVER_OPTIMIZERS,
    AdamState,
    CheckpointError,
    ClientUpdate,
    DimensionMismatchError,
    DivergenceError,
    FedSimError,
    NonFiniteError,
    NoPredictionPositionsError,
    PersonalizationReport,
    PersonalizationResult,
    RoundConfig,
    RoundMetrics,
    ScheduleError,
    ScheduleSpec,
    TrainingResult,
)
from .sweep import BUDGET_MODES, LR_GRID, TAU_GRID, SweepPoint, SweepResult, TauResult, lr_sweep, tau_ablation
from .synthetic import (
    SPLITS,
    base_transition_matrix,
    client_transition_matrix,
    make_synthetic_task,
    mean_pairwise_transition_tv,
    synthetic_vocabulary,
    transition_tv,
)
from .text import ClientPipeline, pack_sequences, tokenize_hashed
from .training import (
    evaluate_personalization,
    personalize_and_eval,
    run_training,
    write_metrics_csv,
    write_personalization_csv,
    write_personalization_json,
)

__all__ = [
    "ALGORITHMS",
    "BUDGET_MODES",
    "LR_GRID",
    "PAD_ID",
    "SCHEDULES",
    "SERVER_OPTIMIZERS",
    "SPLITS",
    "TAU_GRID",
    "AdamState",
    "BigramLM",
    "CheckpointError",
    "ClientPipeline",
    "ClientUpdate",
    "DimensionMismatchError",
    "DivergenceError",
    "FedSimError",
    "LinearRegression",
    "Model",
    "NoPredictionPositionsError",
    "NonFiniteError",
    "PersonalizationReport",
    "PersonalizationResult",
    "RoundConfig",
    "RoundMetrics",
    "ScheduleError",
    "ScheduleSpec",
    "SweepPoint",
    "SweepResult",
    "TauResult",
    "TrainingResult",
    "aggregate",
    "base_transition_matrix",
    "client_transition_matrix",
    "client_update",
    "evaluate_personalization",
    "load_checkpoint",
    "lr_schedule",
    "lr_sweep",
    "make_synthetic_task",
    "mean_pairwise_transition_tv",
    "pack_sequences",
    "personalize_and_eval",
    "run_training",
    "save_checkpoint",
    "server_adam_step",
    "server_sgd_step",
    "synthetic_vocabulary",
    "tau_ablation",
    "tokenize_hashed",
    "transition_tv",
    "write_metrics_csv",
    "write_personalization_csv",
    "write_personalization_json",
]
