"""Checkpoint files: parameters, optimizer moments, stage metadata.

Layout (little-endian):

    magic "S2STCKP1"
    u32 header_len, header (canonical JSON: format, stage kind, step,
        stage seed, optimizer step, config fields + fingerprint)
    u32 params_len, named-tensor block of parameters
    u32 moments_len, named-tensor block of "<param>.m" / "<param>.v"

Every section is length-prefixed so truncation is detected instead of
misread. The JSON is dumped with sorted keys and fixed separators, and
tensor blocks preserve insertion order, so save -> load -> save is
byte-identical.
"""

from __future__ import annotations

import dataclasses
import json
import os
import struct

import numpy as np

from ..errors import CheckpointError
from ..model.config import ModelConfig
from ..model.model import S2STModel
from ..nd.serialize import pack_named, unpack_named
from .adam import OptimizerState

MAGIC = b"S2STCKP1"
FORMAT = 1
STAGE_KINDS = ("init", "pretrain", "finetune", "mixed", "prompt")

_U32 = struct.Struct("<I")


@dataclasses.dataclass
class Checkpoint:
    """Everything needed to resume training bit-exactly from one step."""

    config: ModelConfig
    params: dict                 # name -> float32 array
    opt: OptimizerState
    stage_kind: str
    step: int
    seed: int

    def __post_init__(self):
        if self.stage_kind not in STAGE_KINDS:
            raise CheckpointError(
                f"unknown stage kind {self.stage_kind!r}, expected one of "
                f"{STAGE_KINDS}")
        if self.step < 0:
            raise CheckpointError(f"step must be >= 0, got {self.step}")


def snapshot(model: S2STModel, opt: OptimizerState, stage_kind: str,
             step: int, seed: int) -> Checkpoint:
    """Copy the model/optimizer state into a detached Checkpoint."""
    params = {name: p.data.astype(np.float32).copy()
              for name, p in model.named_parameters()}
    return Checkpoint(config=model.cfg, params=params,
                      opt=OptimizerState(
                          m={k: a.copy() for k, a in opt.m.items()},
                          v={k: a.copy() for k, a in opt.v.items()},
                          step=opt.step),
                      stage_kind=stage_kind, step=step, seed=seed)


def _header_bytes(ckpt: Checkpoint) -> bytes:
    header = {
        "format": FORMAT,
        "fingerprint": ckpt.config.fingerprint(),
        "config": dataclasses.asdict(ckpt.config),
        "stage_kind": ckpt.stage_kind,
        "step": ckpt.step,
        "seed": ckpt.seed,
        "opt_step": ckpt.opt.step,
    }
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    header = _header_bytes(ckpt)
    params_block = pack_named(ckpt.params)
    moments = {}
    for name in ckpt.opt.m:
        moments[f"{name}.m"] = ckpt.opt.m[name]
        moments[f"{name}.v"] = ckpt.opt.v[name]
    moments_block = pack_named(moments)
    blob = b"".join([
        MAGIC,
        _U32.pack(len(header)), header,
        _U32.pack(len(params_block)), params_block,
        _U32.pack(len(moments_block)), moments_block,
    ])
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(blob)
    os.replace(tmp, path)


def _take(buf: bytes, pos: int, n: int, what: str):
    if pos + n > len(buf):
        raise CheckpointError(
            f"truncated checkpoint: wanted {n} bytes for {what} at offset "
            f"{pos}, have {len(buf) - pos}")
    return buf[pos:pos + n], pos + n


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        buf = f.read()
    magic, pos = _take(buf, 0, len(MAGIC), "magic")
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}: not a checkpoint file")
    sections = []
    for what in ("header", "parameters", "moments"):
        raw, pos = _take(buf, pos, 4, f"{what} length")
        n = _U32.unpack(raw)[0]
        sec, pos = _take(buf, pos, n, what)
        sections.append(sec)
    if pos != len(buf):
        raise CheckpointError(f"{len(buf) - pos} trailing bytes after checkpoint")
    try:
        header = json.loads(sections[0].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint header: {exc}") from exc
    if header.get("format") != FORMAT:
        raise CheckpointError(
            f"unsupported checkpoint format {header.get('format')!r}")
    try:
        cfg = ModelConfig(**header["config"])
    except (KeyError, TypeError) as exc:
        raise CheckpointError(f"checkpoint config does not parse: {exc}") from exc
    if cfg.fingerprint() != header["fingerprint"]:
        raise CheckpointError(
            "checkpoint header fingerprint does not match its own config; "
            "file was edited or corrupted")
    params = unpack_named(sections[1])
    m, v = {}, {}
    for name, arr in unpack_named(sections[2]).items():
        if name.endswith(".m"):
            m[name[:-2]] = arr
        elif name.endswith(".v"):
            v[name[:-2]] = arr
        else:
            raise CheckpointError(f"moment tensor {name!r} lacks .m/.v suffix")
    if set(m) != set(v):
        raise CheckpointError("first/second moments name different parameters")
    return Checkpoint(config=cfg, params=params,
                      opt=OptimizerState(m=m, v=v, step=int(header["opt_step"])),
                      stage_kind=header["stage_kind"], step=int(header["step"]),
                      seed=int(header["seed"]))


def restore_model(ckpt: Checkpoint, model: S2STModel) -> None:
    """Copy checkpoint parameters into the model; refuse config mismatch."""
    if model.fingerprint() != ckpt.config.fingerprint():
        raise CheckpointError(
            f"config fingerprint mismatch: model {model.fingerprint()} vs "
            f"checkpoint {ckpt.config.fingerprint()}; refusing to load")
    names = dict(model.named_parameters())
    missing = set(names) - set(ckpt.params)
    extra = set(ckpt.params) - set(names)
    if missing or extra:
        raise CheckpointError(
            f"parameter names disagree: missing {sorted(missing)[:3]}, "
            f"extra {sorted(extra)[:3]}")
    for name, p in names.items():
        arr = ckpt.params[name]
        if arr.shape != p.shape:
            raise CheckpointError(
                f"parameter {name!r}: checkpoint shape {arr.shape} vs model "
                f"{p.shape}")
        p.data = arr.astype(np.float32).copy()


def model_from_checkpoint(ckpt: Checkpoint, seed: int = 0) -> S2STModel:
    model = S2STModel(ckpt.config, seed=seed)
    restore_model(ckpt, model)
    return model
