"""Shared initialization helpers for the CLI and library callers."""

from typing import Any, Dict, Optional

from .config import config as base_config
from .fedsim import RoundConfig, ScheduleSpec
from .partition import PartitionConfig, PartitionStrategy
from .streaming import BenchOptions


def resolve_settings(overrides: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Global config plus overrides; ``None`` overrides are ignored."""
    merged: Dict[str, Any] = dict(base_config)
    if overrides:
        merged.update({k: v for k, v in overrides.items() if v is not None})
    return merged


def build_partition_config(overrides: Optional[Dict[str, Any]] = None) -> PartitionConfig:
    """Create a PartitionConfig from ``strategy``, ``feature``, ``num_groups``, ``alpha`` and friends."""
    settings = resolve_settings(overrides)
    kind = settings.get("strategy", "by_feature")
    if kind == "by_feature":
        strategy = PartitionStrategy.by_feature(settings.get("feature"))
    elif kind == "random":
        strategy = PartitionStrategy.random(int(settings.get("num_groups") or 0))
    elif kind == "dirichlet":
        strategy = PartitionStrategy.dirichlet(
            int(settings.get("num_groups") or 0),
            settings.get("alpha"),
            label_field=settings.get("label_field"),
        )
    else:
        strategy = PartitionStrategy(kind=kind)
    return PartitionConfig(
        strategy=strategy,
        seed=int(settings.get("seed", 0)),
        num_shards=int(settings.get("shards", 1)),
        workers=int(settings.get("workers", 1)),
    )


def build_schedule_spec(overrides: Optional[Dict[str, Any]] = None) -> ScheduleSpec:
    settings = resolve_settings(overrides)
    return ScheduleSpec(
        kind=settings.get("schedule", "constant"),
        eta_max=float(settings.get("eta_s", 0.01)),
        total_rounds=max(1, int(settings.get("rounds", 1))),
        warmup_fraction=float(settings.get("warmup_fraction", 0.1)),
    )


def build_round_config(overrides: Optional[Dict[str, Any]] = None) -> RoundConfig:
    """Create a RoundConfig using shared configuration plus per-run overrides."""
    settings = resolve_settings(overrides)
    return RoundConfig(
        algorithm=settings.get("algo", "fedavg"),
        schedule=build_schedule_spec(settings),
        eta_c=float(settings.get("eta_c", 0.1)),
        cohort_size=int(settings["cohort_size"]),
        batches_per_client=int(settings.get("tau", 64)),
        batch_size=int(settings["batch_size"]),
        seed=int(settings.get("seed", 0)),
        server_optimizer=settings.get("server_optimizer", "adam"),
        vocab_size=int(settings["vocab_size"]),
        seq_len=int(settings["seq_len"]),
        text_field=settings["text_field"],
        workers=int(settings.get("workers", 1)),
    )


def build_bench_options(overrides: Optional[Dict[str, Any]] = None) -> BenchOptions:
    settings = resolve_settings(overrides)
    return BenchOptions(
        timeout_s=float(settings["bench_timeout_s"]),
        sample_interval_s=float(settings["bench_sample_interval_s"]),
        in_memory_budget_bytes=int(settings["in_memory_budget_mb"]) << 20,
        interleave_cycle=int(settings["interleave_cycle"]),
        shuffle_buffer=int(settings.get("shuffle_buffer", 1024)),
        seed=int(settings.get("seed", 0)),
    )
