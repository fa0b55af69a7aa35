"""Command-line interface for grouper.

Subcommands:
- `grouper synth` writes a synthetic heterogeneous language-modeling task.
- `grouper partition` turns a flat corpus into a group-structured dataset.
- `grouper stats` writes per-group statistics, letter values and Q-Q points.
- `grouper bench` times full passes through one access backend.
- `grouper train` runs a federated simulation and writes metrics and a checkpoint.
- `grouper personalize` reports pre/post fine-tuning losses per client.
- `grouper sweep` runs the learning-rate grid or the batches-per-client ablation.

Every subcommand accepts `--config FILE` (a JSON object of the same keys as
its flags; flags win) and writes its artifacts plus the resolved
`config.json` into `--out`.
"""

import argparse
import csv
import io
import json
import logging
import shutil
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

from .bootstrap import (
    build_bench_options,
    build_partition_config,
    build_round_config,
    resolve_settings,
)
from .config import DEFAULTS
from .errors import GrouperError
from .fedsim import (
    ALGORITHMS,
    BUDGET_MODES,
    LR_GRID,
    SCHEDULES,
    SERVER_OPTIMIZERS,
    SPLITS,
    TAU_GRID,
    BigramLM,
    DivergenceError,
    evaluate_personalization,
    load_checkpoint,
    lr_sweep,
    make_synthetic_task,
    run_training,
    save_checkpoint,
    tau_ablation,
    write_metrics_csv,
    write_personalization_csv,
    write_personalization_json,
)
from .partition import STRATEGIES, PartitionedDataset, open_corpus, partition_corpus
from .stats import (
    StatsError,
    compute_group_stats,
    dataset_summary,
    label_histograms,
    letter_values,
    mean_pairwise_tv,
    qq_lognormal_points,
    write_group_stats_csv,
    write_letter_values_csv,
    write_qq_points_csv,
    write_summary_csv,
)
from .streaming import BACKENDS, iterate_bench, write_bench_csv, write_bench_json

logger = logging.getLogger(__name__)

CONFIG_ECHO = "config.json"
REQUIRED = object()

_TRAINING_KEYS: Dict[str, Any] = {
    "algo": "fedavg",
    "cohort_size": None,
    "tau": 64,
    "batch_size": None,
    "eta_c": 0.1,
    "eta_s": 0.01,
    "schedule": "constant",
    "warmup_fraction": 0.1,
    "rounds": 100,
    "seed": 0,
    "server_optimizer": "adam",
    "vocab_size": None,
    "seq_len": None,
    "text_field": None,
    "workers": 1,
}

# Keys each subcommand accepts, with their defaults. ``None`` defers to the
# shared configuration; REQUIRED must come from a flag or the config file.
COMMAND_KEYS: Dict[str, Dict[str, Any]] = {
    "synth": {
        "clients": 100,
        "vocab_size": None,
        "alpha": 1.0,
        "seed": 0,
        "split": "train",
        "examples_per_client": 8,
        "words_per_example": 64,
        "shards": 1,
        "workers": 1,
    },
    "partition": {
        "input": REQUIRED,
        "format": None,
        "strategy": "by_feature",
        "feature": None,
        "num_groups": None,
        "alpha": None,
        "label_field": None,
        "seed": 0,
        "shards": 1,
        "workers": 1,
        "memory_budget_mb": None,
    },
    "stats": {
        "data": REQUIRED,
        "text_field": None,
        "label_field": None,
        "depth": 5,
        "workers": 1,
    },
    "bench": {
        "data": REQUIRED,
        "backend": "streaming",
        "trials": 5,
        "bench_timeout_s": None,
        "shuffle_buffer": 1024,
        "interleave_cycle": None,
        "seed": 0,
    },
    "train": dict(_TRAINING_KEYS, data=REQUIRED),
    "personalize": dict(
        _TRAINING_KEYS,
        data=REQUIRED,
        checkpoint=REQUIRED,
        epochs=1,
        max_clients=None,
    ),
    "sweep": dict(
        _TRAINING_KEYS,
        data=REQUIRED,
        mode="lr",
        rounds=20,
        server_lrs=list(LR_GRID),
        client_lrs=None,
        eval_data=None,
        taus=list(TAU_GRID),
        budget="rounds",
        max_clients=None,
    ),
}


class OutputExistsError(GrouperError):
    """Raised when --out already holds artifacts and --force was not given."""
    pass


def _float_list(raw: str) -> List[float]:
    try:
        return [float(part) for part in raw.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {raw!r}") from exc


def _int_list(raw: str) -> List[int]:
    try:
        return [int(part) for part in raw.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {raw!r}") from exc


def load_config_file(path: Optional[str]) -> Dict[str, Any]:
    """Parse a ``--config`` JSON object."""
    if not path:
        return {}
    try:
        parsed = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"Invalid config JSON in {path}: {exc}") from exc
    if not isinstance(parsed, dict):
        raise ValueError("Config file must hold a JSON object.")
    return parsed


def resolve_command_config(command: str, args: argparse.Namespace) -> Dict[str, Any]:
    """
    Merge subcommand defaults, the ``--config`` file and explicit flags.

    Raises:
        ValueError: on unknown config keys or missing required keys
    """
    keys = COMMAND_KEYS[command]
    file_config = load_config_file(args.config)
    unknown = sorted(set(file_config) - set(keys) - set(DEFAULTS))
    if unknown:
        raise ValueError(f"unknown config keys for {command}: {', '.join(unknown)}")

    resolved: Dict[str, Any] = {k: v for k, v in keys.items() if v is not REQUIRED}
    resolved.update(file_config)
    for key in keys:
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    missing = [k for k, v in keys.items() if v is REQUIRED and resolved.get(k) is None]
    if missing:
        flags = ", ".join("--" + k.replace("_", "-") for k in missing)
        raise ValueError(f"{command} requires {flags}")
    return resolve_settings(resolved)


def prepare_output(out: Path, force: bool, protected: List[Path]) -> None:
    """Create ``out``; refuse to touch a non-empty one unless ``force``."""
    resolved = out.resolve()
    for path in protected:
        path = path.resolve()
        if resolved == path or resolved in path.parents:
            raise OutputExistsError(f"--out {out} would overwrite the input {path}")
    if out.exists():
        if not out.is_dir():
            raise OutputExistsError(f"--out {out} exists and is not a directory")
        if any(out.iterdir()):
            if not force:
                raise OutputExistsError(
                    f"--out {out} is not empty; pass --force to replace its contents"
                )
            for child in out.iterdir():
                if child.is_dir() and not child.is_symlink():
                    shutil.rmtree(child)
                else:
                    child.unlink()
    out.mkdir(parents=True, exist_ok=True)


def write_config_echo(settings: Dict[str, Any], out: Path) -> Path:
    path = out / CONFIG_ECHO
    path.write_text(json.dumps(settings, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _print_summary(payload: Dict[str, Any], json_output: bool) -> None:
    if json_output:
        print(json.dumps(payload, indent=2, sort_keys=True))
        return
    for key in sorted(payload):
        print(f"- {key}: {payload[key]}")


def run_synth(settings: Dict[str, Any], out: Path) -> Dict[str, Any]:
    dataset = make_synthetic_task(
        num_clients=int(settings["clients"]),
        vocab_size=int(settings["vocab_size"]),
        alpha=float(settings["alpha"]),
        seed=int(settings["seed"]),
        output_dir=out,
        split=settings["split"],
        examples_per_client=int(settings["examples_per_client"]),
        words_per_example=int(settings["words_per_example"]),
        num_shards=int(settings["shards"]),
        workers=int(settings["workers"]),
        keep_files=(CONFIG_ECHO,),
    )
    return {"groups": dataset.num_groups, "examples": dataset.num_examples, "out": out.as_posix()}


def run_partition(settings: Dict[str, Any], out: Path) -> Dict[str, Any]:
    source = open_corpus(settings["input"], settings.get("format"))
    dataset = partition_corpus(
        source,
        build_partition_config(settings),
        out,
        memory_budget_bytes=int(settings["memory_budget_mb"]) << 20,
        tmpdir=settings["tmpdir"],
        max_record_bytes=int(settings["max_record_mb"]) << 20,
        keep_files=(CONFIG_ECHO,),
    )
    return {
        "groups": dataset.num_groups,
        "examples": dataset.num_examples,
        "shards": dataset.manifest.num_shards,
        "out": out.as_posix(),
    }


def run_stats(settings: Dict[str, Any], out: Path) -> Dict[str, Any]:
    dataset = PartitionedDataset.open(settings["data"])
    table, example_words = compute_group_stats(
        dataset, text_field=settings["text_field"], workers=int(settings["workers"])
    )
    summary = dataset_summary(table, example_words)
    write_group_stats_csv(table, out / "group_stats.csv")
    write_summary_csv(summary, out / "summary.csv")

    group_words = [row.num_words for row in table.rows]
    if group_words:
        write_letter_values_csv(
            letter_values(group_words, int(settings["depth"])), out / "letter_values.csv"
        )
    else:
        logger.warning("dataset has no groups; skipping letter values")
    try:
        points = qq_lognormal_points([w for w in group_words if w > 0])
        write_qq_points_csv(points, out / "qq_points.csv")
    except StatsError as exc:
        logger.warning("skipping Q-Q points: %s", exc)

    payload: Dict[str, Any] = summary.to_row()
    if settings.get("label_field"):
        _, _, histograms = label_histograms(dataset, settings["label_field"])
        payload["mean_pairwise_label_tv"] = mean_pairwise_tv(histograms)
    return payload


def run_bench(settings: Dict[str, Any], out: Path) -> Dict[str, Any]:
    dataset = PartitionedDataset.open(settings["data"])
    report = iterate_bench(
        dataset, settings["backend"], int(settings["trials"]), build_bench_options(settings)
    )
    write_bench_json(report, out / "bench.json")
    write_bench_csv(report, out / "bench.csv")
    return {
        "backend": report.backend,
        "elapsed_seconds": report.elapsed_seconds,
        "peak_memory_bytes": report.peak_memory_bytes,
        "timed_out": report.timed_out,
    }


def run_train(settings: Dict[str, Any], out: Path) -> Dict[str, Any]:
    dataset = PartitionedDataset.open(settings["data"])
    config = build_round_config(settings)
    rounds = int(settings["rounds"])
    try:
        result = run_training(dataset, config, rounds)
    except DivergenceError as exc:
        write_metrics_csv(exc.metrics, out / "metrics.csv")
        raise
    write_metrics_csv(result.metrics, out / "metrics.csv")
    save_checkpoint(
        out / "checkpoint.bin",
        result.params,
        state=result.state,
        round_index=len(result.metrics),
        schedule=config.schedule,
    )
    final = result.metrics[-1].mean_loss if result.metrics else None
    return {"rounds": len(result.metrics), "final_loss": final, "out": out.as_posix()}


def run_personalize(settings: Dict[str, Any], out: Path) -> Dict[str, Any]:
    dataset = PartitionedDataset.open(settings["data"])
    config = build_round_config(settings)
    params, _, _ = load_checkpoint(settings["checkpoint"])
    max_clients = settings.get("max_clients")
    report = evaluate_personalization(
        dataset,
        params,
        config,
        model=BigramLM(config.vocab_size),
        epochs=int(settings["epochs"]),
        max_clients=int(max_clients) if max_clients is not None else None,
    )
    write_personalization_csv(report, out / "personalization.csv")
    write_personalization_json(report, out / "personalization.json")
    return {
        "clients": len(report.results),
        "median_pre_loss": report.pre_summary.p50,
        "median_post_loss": report.post_summary.p50,
    }


def _write_rows(path: Path, rows: List[Dict[str, Any]]) -> None:
    with io.open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0]) if rows else [])
        writer.writeheader()
        writer.writerows(rows)


def run_sweep(settings: Dict[str, Any], out: Path) -> Dict[str, Any]:
    dataset = PartitionedDataset.open(settings["data"])
    config = build_round_config(settings)
    rounds = int(settings["rounds"])

    if settings["mode"] == "lr":
        client_lrs = settings.get("client_lrs")
        result = lr_sweep(
            dataset,
            config,
            rounds,
            server_lrs=[float(v) for v in settings["server_lrs"]],
            client_lrs=[float(v) for v in client_lrs] if client_lrs else None,
        )
        _write_rows(out / "sweep.csv", [p.to_dict() for p in result.points])
        best = result.best.to_dict()
        (out / "best.json").write_text(json.dumps(best, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return {"points": len(result.points), "best_eta_s": best["eta_s"], "best_eta_c": best["eta_c"]}

    eval_dataset = PartitionedDataset.open(settings["eval_data"])
    max_clients = settings.get("max_clients")
    results = tau_ablation(
        dataset,
        eval_dataset,
        config,
        rounds,
        taus=[int(t) for t in settings["taus"]],
        mode=settings["budget"],
        max_eval_clients=int(max_clients) if max_clients is not None else None,
    )
    _write_rows(out / "tau_ablation.csv", [r.to_row() for r in results])
    return {f"tau_{r.tau}_median_post_loss": r.post_loss.p50 for r in results}


COMMANDS: Dict[str, Callable[[Dict[str, Any], Path], Dict[str, Any]]] = {
    "synth": run_synth,
    "partition": run_partition,
    "stats": run_stats,
    "bench": run_bench,
    "train": run_train,
    "personalize": run_personalize,
    "sweep": run_sweep,
}


def _add_training_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--algo", choices=ALGORITHMS, help="Federated algorithm.")
    parser.add_argument("--cohort", dest="cohort_size", type=int, help="Clients per round.")
    parser.add_argument("--tau", type=int, help="Batches each client yields per round.")
    parser.add_argument("--batch-size", dest="batch_size", type=int, help="Sequences per batch.")
    parser.add_argument("--eta-c", dest="eta_c", type=float, help="Client learning rate.")
    parser.add_argument("--eta-s", dest="eta_s", type=float, help="Peak server learning rate.")
    parser.add_argument("--schedule", choices=SCHEDULES, help="Server learning-rate schedule.")
    parser.add_argument(
        "--warmup-fraction", dest="warmup_fraction", type=float, help="Share of rounds spent warming up."
    )
    parser.add_argument("--rounds", type=int, help="Number of training rounds.")
    parser.add_argument("--seed", type=int, help="Root seed for every random stream.")
    parser.add_argument(
        "--server-optimizer", dest="server_optimizer", choices=SERVER_OPTIMIZERS, help="Server optimizer."
    )
    parser.add_argument("--vocab", dest="vocab_size", type=int, help="Vocabulary size.")
    parser.add_argument("--seq-len", dest="seq_len", type=int, help="Tokens per packed sequence.")
    parser.add_argument("--text-field", dest="text_field", help="JSON field holding the text.")
    parser.add_argument("--workers", type=int, help="Threads used within a cohort.")


def build_parser() -> argparse.ArgumentParser:
    """Create the top-level CLI parser."""
    parser = argparse.ArgumentParser(
        prog="grouper",
        description="Build, stream, analyze and simulate federated training on group-structured datasets.",
    )
    parser.add_argument("--log-level", dest="log_level", help="Logging level (default from config).")
    subparsers = parser.add_subparsers(dest="command", required=True)

    helps = {
        "synth": "Write a synthetic heterogeneous language-modeling task.",
        "partition": "Partition a flat corpus into a group-structured dataset.",
        "stats": "Compute per-group statistics and distribution summaries.",
        "bench": "Benchmark full passes through an access backend.",
        "train": "Run a federated training simulation.",
        "personalize": "Evaluate pre/post personalization losses from a checkpoint.",
        "sweep": "Run the learning-rate grid or the batches-per-client ablation.",
    }
    sub: Dict[str, argparse.ArgumentParser] = {}
    for name, text in helps.items():
        sub[name] = subparsers.add_parser(name, help=text, description=text)
        sub[name].add_argument("--config", help="JSON file of settings; flags override it.")
        sub[name].add_argument("--out", required=True, help="Directory for the run's artifacts.")
        sub[name].add_argument(
            "--force", action="store_true", help="Replace the contents of a non-empty --out."
        )
        sub[name].add_argument("--json", dest="json_output", action="store_true", help="Print a JSON summary.")

    p = sub["synth"]
    p.add_argument("--clients", type=int, help="Number of clients.")
    p.add_argument("--vocab", dest="vocab_size", type=int, help="Vocabulary size.")
    p.add_argument("--alpha", type=float, help="Heterogeneity; smaller is more heterogeneous.")
    p.add_argument("--seed", type=int, help="Root seed.")
    p.add_argument("--split", choices=SPLITS, help="Which split's clients to draw.")
    p.add_argument("--examples-per-client", dest="examples_per_client", type=int)
    p.add_argument("--words-per-example", dest="words_per_example", type=int)
    p.add_argument("--shards", type=int, help="Number of shard files.")
    p.add_argument("--workers", type=int, help="Partitioning processes.")

    p = sub["partition"]
    p.add_argument("--input", help="Corpus file (.jsonl, .csv or .txt).")
    p.add_argument("--format", choices=("jsonl", "csv", "text"), help="Corpus format (default: from suffix).")
    p.add_argument("--strategy", choices=STRATEGIES, help="How examples map to groups.")
    p.add_argument("--feature", help="Feature holding the group key (by_feature).")
    p.add_argument("--num-groups", dest="num_groups", type=int, help="Group count (random, dirichlet).")
    p.add_argument("--alpha", type=float, help="Dirichlet concentration.")
    p.add_argument("--label-field", dest="label_field", help="Label feature for dirichlet.")
    p.add_argument("--seed", type=int, help="Root seed.")
    p.add_argument("--shards", type=int, help="Number of shard files.")
    p.add_argument("--workers", type=int, help="Partitioning processes.")
    p.add_argument("--memory-budget-mb", dest="memory_budget_mb", type=int, help="Sort budget before spilling.")

    p = sub["stats"]
    p.add_argument("--data", help="Partitioned dataset directory.")
    p.add_argument("--text-field", dest="text_field", help="JSON field holding the text.")
    p.add_argument("--label-field", dest="label_field", help="Also report label heterogeneity.")
    p.add_argument("--depth", type=int, help="Letter-value depth.")
    p.add_argument("--workers", type=int, help="Processes spread over shards.")

    p = sub["bench"]
    p.add_argument("--data", help="Partitioned dataset directory.")
    p.add_argument("--backend", choices=BACKENDS, help="Access backend to time.")
    p.add_argument("--trials", type=int, help="Number of serial trials.")
    p.add_argument("--timeout", dest="bench_timeout_s", type=float, help="Per-trial timeout in seconds.")
    p.add_argument("--shuffle-buffer", dest="shuffle_buffer", type=int, help="Streaming shuffle buffer.")
    p.add_argument("--interleave-cycle", dest="interleave_cycle", type=int, help="Shards read at once.")
    p.add_argument("--seed", type=int, help="Root seed.")

    p = sub["train"]
    p.add_argument("--data", help="Partitioned training dataset.")
    _add_training_arguments(p)

    p = sub["personalize"]
    p.add_argument("--data", help="Partitioned evaluation dataset.")
    p.add_argument("--checkpoint", help="Checkpoint written by `grouper train`.")
    p.add_argument("--epochs", type=int, help="Fine-tuning passes per client.")
    p.add_argument("--max-clients", dest="max_clients", type=int, help="Stop after this many clients.")
    _add_training_arguments(p)

    p = sub["sweep"]
    p.add_argument("--data", help="Partitioned training dataset.")
    p.add_argument("--mode", choices=("lr", "tau"), help="Learning-rate grid or tau ablation.")
    p.add_argument("--server-lrs", dest="server_lrs", type=_float_list, help="Comma-separated server rates.")
    p.add_argument("--client-lrs", dest="client_lrs", type=_float_list, help="Comma-separated client rates.")
    p.add_argument("--eval-data", dest="eval_data", help="Held-out clients (tau mode).")
    p.add_argument("--taus", type=_int_list, help="Comma-separated batches-per-client values.")
    p.add_argument("--budget", choices=BUDGET_MODES, help="Equalize rounds or examples across taus.")
    p.add_argument("--max-clients", dest="max_clients", type=int, help="Evaluation clients (tau mode).")
    _add_training_arguments(p)

    for p in sub.values():
        p.set_defaults(usage_error=p.error)
    return parser


def _report_error(exc: BaseException) -> None:
    print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)


def _usage_exit(args: argparse.Namespace, message: str) -> int:
    try:
        args.usage_error(message)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    return 2


def main(argv: Optional[List[str]] = None) -> int:
    """CLI entry point."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2

    try:
        settings = resolve_command_config(args.command, args)
    except (ValueError, OSError) as exc:
        return _usage_exit(args, str(exc))
    if args.command == "sweep" and settings["mode"] == "tau" and not settings.get("eval_data"):
        return _usage_exit(args, "sweep --mode tau requires --eval-data")

    if args.log_level:
        settings["log_level"] = args.log_level
    logging.basicConfig(
        level=getattr(logging, str(settings["log_level"]).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    out = Path(args.out)
    protected = [
        Path(settings[k]) for k in ("data", "eval_data", "input", "checkpoint") if settings.get(k)
    ]
    try:
        prepare_output(out, args.force, protected)
        write_config_echo(settings, out)
        payload = COMMANDS[args.command](settings, out)
    except (GrouperError, OSError, ValueError) as exc:
        logger.debug("%s failed", args.command, exc_info=True)
        _report_error(exc)
        return 1

    _print_summary(payload, args.json_output)
    return 0


if __name__ == "__main__":
    sys.exit(main())
