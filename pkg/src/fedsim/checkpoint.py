"""
Training checkpoints.

Layout::

    uint64  header_len
    byte    header[header_len]        UTF-8 JSON
    float64 params[dimension]         little-endian
    float64 m[dimension], v[dimension] only when the header lists them
"""

import io
import json
import struct
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from .models import AdamState, CheckpointError, ScheduleSpec

CHECKPOINT_VERSION = 1
_HEADER_LEN = struct.Struct("<Q")
_FLOAT = np.dtype("<f8")


def save_checkpoint(
    path: Union[str, Path],
    params: np.ndarray,
    state: Optional[AdamState] = None,
    round_index: int = 0,
    schedule: Optional[ScheduleSpec] = None,
) -> Path:
    path = Path(path)
    arrays = ["params"] + (["m", "v"] if state is not None else [])
    header: Dict[str, Any] = {
        "format_version": CHECKPOINT_VERSION,
        "dimension": int(params.size),
        "round": round_index,
        "step": state.step if state is not None else 0,
        "arrays": arrays,
        "schedule": schedule.to_dict() if schedule is not None else None,
    }
    if state is not None:
        header["adam"] = {"beta1": state.beta1, "beta2": state.beta2, "epsilon": state.epsilon}
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with io.open(path, "wb") as f:
        f.write(_HEADER_LEN.pack(len(blob)))
        f.write(blob)
        f.write(np.ascontiguousarray(params, dtype=_FLOAT).tobytes())
        if state is not None:
            f.write(np.ascontiguousarray(state.m, dtype=_FLOAT).tobytes())
            f.write(np.ascontiguousarray(state.v, dtype=_FLOAT).tobytes())
    return path


def load_checkpoint(
    path: Union[str, Path]
) -> Tuple[np.ndarray, Optional[AdamState], Dict[str, Any]]:
    """Returns ``(params, adam_state_or_None, header)``."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER_LEN.size:
        raise CheckpointError(f"{path} is too short to be a checkpoint")
    (header_len,) = _HEADER_LEN.unpack_from(data, 0)
    start = _HEADER_LEN.size + header_len
    try:
        header = json.loads(data[_HEADER_LEN.size : start].decode("utf-8"))
        dimension = int(header["dimension"])
        arrays = list(header["arrays"])
    except (UnicodeDecodeError, ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"malformed checkpoint header in {path}: {exc}") from exc

    expected = start + len(arrays) * dimension * _FLOAT.itemsize
    if len(data) != expected:
        raise CheckpointError(f"{path} holds {len(data)} bytes, expected {expected}")
    values = {
        name: np.frombuffer(
            data, dtype=_FLOAT, count=dimension, offset=start + i * dimension * _FLOAT.itemsize
        ).astype(np.float64)
        for i, name in enumerate(arrays)
    }

    state = None
    if "m" in values and "v" in values:
        adam = header.get("adam", {})
        state = AdamState(
            step=int(header.get("step", 0)),
            m=values["m"],
            v=values["v"],
            beta1=float(adam.get("beta1", 0.9)),
            beta2=float(adam.get("beta2", 0.999)),
            epsilon=float(adam.get("epsilon", 1e-8)),
        )
    return values["params"], state, header
