"""Simple configuration loader for grouper."""

import os
import tempfile
from pathlib import Path

from dotenv import load_dotenv

DEFAULTS = {
    "tmpdir": tempfile.gettempdir(),
    "memory_budget_mb": 256,
    "max_record_mb": 1024,
    "interleave_cycle": 4,
    "interleave_block": 1,
    "prefetch_depth": 2,
    "in_memory_budget_mb": 1024,
    "bench_timeout_s": 7200.0,
    "bench_sample_interval_s": 0.01,
    "vocab_size": 64,
    "seq_len": 129,
    "batch_size": 16,
    "cohort_size": 16,
    "text_field": "text",
    "log_level": "INFO",
}

ENV_MAPPINGS = {
    "GROUPER_TMPDIR": "tmpdir",
    "GROUPER_MEMORY_BUDGET_MB": "memory_budget_mb",
    "GROUPER_MAX_RECORD_MB": "max_record_mb",
    "GROUPER_INTERLEAVE_CYCLE": "interleave_cycle",
    "GROUPER_INTERLEAVE_BLOCK": "interleave_block",
    "GROUPER_PREFETCH_DEPTH": "prefetch_depth",
    "GROUPER_IN_MEMORY_BUDGET_MB": "in_memory_budget_mb",
    "GROUPER_BENCH_TIMEOUT_S": "bench_timeout_s",
    "GROUPER_BENCH_SAMPLE_INTERVAL_S": "bench_sample_interval_s",
    "GROUPER_VOCAB_SIZE": "vocab_size",
    "GROUPER_SEQ_LEN": "seq_len",
    "GROUPER_BATCH_SIZE": "batch_size",
    "GROUPER_COHORT_SIZE": "cohort_size",
    "GROUPER_TEXT_FIELD": "text_field",
    "GROUPER_LOG_LEVEL": "log_level",
}


def _coerce(config_key, value):
    """Cast an environment string to the type of the default for that key."""
    default = DEFAULTS[config_key]
    if isinstance(default, bool):
        return value.strip().lower() in {"1", "true", "yes", "on"}
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return value


def load_config():
    """Load configuration from pyproject.toml with simple fallbacks."""
    project_root = Path(__file__).parent.parent
    config_path = project_root / "pyproject.toml"

    # Load environment variables from .env if present
    load_dotenv(project_root / ".env", override=False)

    config = dict(DEFAULTS)

    if config_path.exists():
        try:
            import toml
            with open(config_path, "r", encoding="utf-8") as f:
                full_config = toml.load(f)
                project_config = full_config.get("tool", {}).get("grouper", {})
                config.update(
                    {k: v for k, v in project_config.items() if k in DEFAULTS}
                )
        except ImportError:
            # toml not available, use defaults
            pass
        except Exception:
            # Error reading config, use defaults
            pass

    for env_var, config_key in ENV_MAPPINGS.items():
        if env_var in os.environ:
            config[config_key] = _coerce(config_key, os.environ[env_var])

    # Spill files are written by worker processes; keep the path absolute
    config["tmpdir"] = Path(config["tmpdir"]).expanduser().resolve().as_posix()

    return config


# Load configuration once
config = load_config()
