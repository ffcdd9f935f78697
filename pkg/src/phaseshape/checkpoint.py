"""Deterministic checkpoint container (format v1).

Layout:  MAGIC line, a sorted-key JSON header, a NUL separator, then the raw
little-endian float64 bytes of every array (parameter blocks in order, then
the Adam moments).  No timestamps or environment data are stored, so saving
the same state twice yields byte-identical files; parameters round-trip
exactly, which makes a resumed run bit-identical to an uninterrupted one.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import __version__
from .models import ModelSpec
from .optim import AdamState, ParamVector
from .trainer import Checkpoint, TrainConfig

__all__ = ["load_checkpoint", "save_checkpoint"]

MAGIC = b"PHASESHAPE-CKPT-v1\n"
FORMAT_VERSION = 1

# conditioning-input scales baked into trained weights (see demapper module)
INPUT_SCALES = {"sigma_n": 1.0, "sigma_phi": 100.0}


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    arrays: list[tuple[str, np.ndarray]] = [(f"param:{n}", a) for n, a in ckpt.params.items()]
    arrays.append(("adam:first_moment", ckpt.adam.first_moment))
    arrays.append(("adam:second_moment", ckpt.adam.second_moment))
    index = []
    offset = 0
    for name, arr in arrays:
        index.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size
    header = {
        "format_version": FORMAT_VERSION,
        "tool_version": __version__,
        "spec": ckpt.spec.to_dict(),
        "config": ckpt.config.to_dict(),
        "epoch": ckpt.epoch,
        "diverged": ckpt.diverged,
        "history": ckpt.history,
        "adam_step_count": ckpt.adam.step_count,
        "input_scales": INPUT_SCALES,
        "arrays": index,
    }
    blob = b"".join(np.ascontiguousarray(arr, dtype="<f8").tobytes() for _, arr in arrays)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        f.write(b"\n\x00")
        f.write(blob)


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise ValueError(f"{path}: not a phaseshape checkpoint")
    body = raw[len(MAGIC) :]
    sep = body.index(b"\n\x00")
    header = json.loads(body[:sep].decode("utf-8"))
    if header["format_version"] != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format {header['format_version']}")
    blob = body[sep + 2 :]
    values = np.frombuffer(blob, dtype="<f8")

    loaded: dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        size = int(np.prod(entry["shape"])) if entry["shape"] else 1
        arr = values[entry["offset"] : entry["offset"] + size].reshape(entry["shape"])
        loaded[entry["name"]] = arr.astype(np.float64)

    params = ParamVector(
        {e["name"][6:]: loaded[e["name"]] for e in header["arrays"] if e["name"].startswith("param:")}
    )
    adam = AdamState(
        first_moment=loaded["adam:first_moment"].copy(),
        second_moment=loaded["adam:second_moment"].copy(),
        step_count=int(header["adam_step_count"]),
    )
    return Checkpoint(
        spec=ModelSpec.from_dict(header["spec"]),
        config=TrainConfig.from_dict(header["config"]),
        params=params,
        adam=adam,
        epoch=int(header["epoch"]),
        history=header["history"],
        diverged=bool(header["diverged"]),
    )
