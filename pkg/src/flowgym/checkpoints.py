"""Binary checkpoints for network parameters and optimizer state.

Layout: 4-byte magic, u32 format version, u32 header length, a sorted-key
JSON header (network kind, architecture fields, optimizer hyperparameters
and step count, free-form extras), then three little-endian float32 blocks:
parameters, first moments, second moments.  Every field is written
deterministically, so identical training runs produce byte-identical files.
"""

from __future__ import annotations

from dataclasses import dataclass
import json
import os
import struct

import numpy as np

from .checks import ValidationError
from .networks import SurrogateArch, VelocityArch
from .optim import AdamWParams, AdamWState

MAGIC = b"FGCK"
VERSION = 1

_KINDS = {"velocity": VelocityArch, "surrogate": SurrogateArch}


@dataclass
class Checkpoint:
    kind: str
    arch: object
    params: np.ndarray
    opt_state: AdamWState
    extra: dict


def save_checkpoint(path: str, kind: str, arch, params: np.ndarray,
                    opt_state: AdamWState, extra: dict | None = None) -> None:
    if kind not in _KINDS:
        raise ValidationError(f"unknown checkpoint kind {kind!r}")
    params = np.asarray(params, dtype=np.float32)
    header = {
        "kind": kind,
        "arch": arch.describe(),
        "opt": {
            "learning_rate": opt_state.hyper.learning_rate,
            "beta1": opt_state.hyper.beta1,
            "beta2": opt_state.hyper.beta2,
            "eps": opt_state.hyper.eps,
            "weight_decay": opt_state.hyper.weight_decay,
            "step": int(opt_state.step),
        },
        "n_params": int(params.size),
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(blob)))
        fh.write(blob)
        fh.write(params.astype("<f4").tobytes())
        fh.write(np.asarray(opt_state.m, dtype="<f4").tobytes())
        fh.write(np.asarray(opt_state.v, dtype="<f4").tobytes())
    os.replace(tmp, path)


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ValidationError(f"{path}: not a checkpoint file")
        version, header_len = struct.unpack("<II", fh.read(8))
        if version != VERSION:
            raise ValidationError(f"{path}: unsupported checkpoint version "
                                  f"{version}")
        header = json.loads(fh.read(header_len).decode("utf-8"))
        n = int(header["n_params"])
        body = fh.read(3 * 4 * n)
        if len(body) != 3 * 4 * n:
            raise ValidationError(f"{path}: truncated checkpoint body")
    arrays = np.frombuffer(body, dtype="<f4").reshape(3, n)
    kind = header["kind"]
    if kind not in _KINDS:
        raise ValidationError(f"{path}: unknown checkpoint kind {kind!r}")
    arch = _KINDS[kind](**header["arch"])
    if arch.n_params != n:
        raise ValidationError(
            f"{path}: architecture expects {arch.n_params} parameters, "
            f"file holds {n}")
    opt = header["opt"]
    opt_state = AdamWState(
        hyper=AdamWParams(learning_rate=float(opt["learning_rate"]),
                          beta1=float(opt["beta1"]), beta2=float(opt["beta2"]),
                          eps=float(opt["eps"]),
                          weight_decay=float(opt["weight_decay"])),
        m=arrays[1].copy(), v=arrays[2].copy(), step=int(opt["step"]))
    return Checkpoint(kind=kind, arch=arch, params=arrays[0].copy(),
                      opt_state=opt_state, extra=header.get("extra", {}))
