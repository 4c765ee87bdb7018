"""Run configuration: a JSON document resolved against named profiles.

Schema (all sections optional unless noted):

    {
      "profile":  "toy" | "fisher" | "teden2zh",   # default "toy"
      "seed":     0,
      "model":    { any ModelConfig field; vocab sizes required for the
                    full-size profiles, defaulted for "toy" },
      "stages":   [ {"kind": "pretrain", "max_steps": 100, ...}, ... ],
      "frontend": { "src_sample_rate", "tgt_sample_rate", "n_fft",
                    "hop_length", "f_min", "f_max", "log_floor" },
      "paths":    { "primary", "secondary", "heldout", "templates",
                    "out_dir", "mt_command", "tts_command", "asr_command" }
    }

Stage entries inherit base_lr / warmup_steps / batch_tokens from the
profile, and seed from the run seed, when not given explicitly. Unknown
keys anywhere are rejected by name. Manifest/template paths are resolved
relative to the config file and must exist when the file is loaded.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .audio.types import FrontendConfig, SpecAugmentPolicy
from .errors import ConfigError, ParseError
from .model import ModelConfig, fisher_config, teden2zh_config, toy_config
from .train import StageConfig

OUT_ROOT_ENV = "S2ST_OUT_ROOT"

# training-schedule and sample-rate presets that ride alongside the
# architecture presets; full-size numbers follow the published recipes
PROFILES = {
    "fisher": dict(model=fisher_config, base_lr=0.006, warmup_steps=4000,
                   batch_tokens=60000, src_sample_rate=8000,
                   tgt_sample_rate=24000, default_vocab=None),
    "teden2zh": dict(model=teden2zh_config, base_lr=0.0015, warmup_steps=4000,
                     batch_tokens=45000, src_sample_rate=16000,
                     tgt_sample_rate=24000, default_vocab=None),
    # ten toy phones plus the four specials on both sides
    "toy": dict(model=toy_config, base_lr=0.002, warmup_steps=100,
                batch_tokens=2000, src_sample_rate=16000,
                tgt_sample_rate=24000, default_vocab=14),
}

_PATH_KEYS = ("primary", "secondary", "heldout", "templates")
_COMMAND_KEYS = ("mt_command", "tts_command", "asr_command")


@dataclass
class RunPaths:
    primary: str | None = None
    secondary: str | None = None
    heldout: str | None = None
    templates: str | None = None
    out_dir: str | None = None
    mt_command: list | None = None
    tts_command: list | None = None
    asr_command: list | None = None


@dataclass
class RunConfig:
    model: ModelConfig
    stages: list
    frontend: FrontendConfig   # analysis parameters at the synthesis rate
    paths: RunPaths = field(default_factory=RunPaths)
    seed: int = 0
    profile: str = "toy"
    src_sample_rate: int = 16000
    tgt_sample_rate: int = 24000

    def stage(self, kind: str) -> StageConfig:
        for s in self.stages:
            if s.kind == kind:
                return s
        have = [s.kind for s in self.stages]
        raise ConfigError(
            f"no {kind!r} stage in config; configured stages: {have}")

    def out_root(self, override=None) -> Path:
        """Flag > config > environment > ./runs, in that order."""
        root = (override or self.paths.out_dir
                or os.environ.get(OUT_ROOT_ENV) or "runs")
        return Path(root)


def _reject_unknown(doc: dict, allowed, where: str) -> None:
    for key in doc:
        if key not in allowed:
            raise ConfigError(
                f"unknown key {key!r} in {where}; allowed keys: "
                f"{sorted(allowed)}")


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _resolve_model(profile: dict, section: dict) -> ModelConfig:
    section = dict(section)
    allowed = {f.name for f in dataclasses.fields(ModelConfig)}
    _reject_unknown(section, allowed, "the model section")
    for side in ("src_phone_vocab", "tgt_phone_vocab"):
        if side not in section:
            _require(profile["default_vocab"] is not None,
                     f"model.{side} is required for this profile")
            section[side] = profile["default_vocab"]
    return profile["model"](**section)


def _resolve_stage(profile: dict, seed: int, entry: dict, index: int
                   ) -> StageConfig:
    where = f"stages[{index}]"
    _require(isinstance(entry, dict), f"{where} must be an object")
    entry = dict(entry)
    allowed = {f.name for f in dataclasses.fields(StageConfig)}
    _reject_unknown(entry, allowed, where)
    _require("kind" in entry, f"{where} needs a 'kind'")
    _require("max_steps" in entry, f"{where} needs 'max_steps'")
    entry.setdefault("base_lr", profile["base_lr"])
    entry.setdefault("warmup_steps", profile["warmup_steps"])
    entry.setdefault("batch_tokens", profile["batch_tokens"])
    entry.setdefault("seed", seed)
    if "specaugment" in entry:
        policy = entry["specaugment"]
        _require(isinstance(policy, dict),
                 f"{where}.specaugment must be an object")
        pol_allowed = {f.name for f in dataclasses.fields(SpecAugmentPolicy)}
        _reject_unknown(policy, pol_allowed, f"{where}.specaugment")
        entry["specaugment"] = SpecAugmentPolicy(**policy)
        entry.setdefault("use_specaugment", True)
    return StageConfig(**entry)


def _check_stage_order(stages: list) -> None:
    seen_other = False
    for s in stages:
        if s.kind != "pretrain":
            seen_other = True
        elif seen_other:
            raise ConfigError(
                "stage order: pre-training must come before "
                "finetune/mixed/prompt stages")


def _resolve_frontend(profile: dict, section: dict):
    section = dict(section)
    allowed = {"src_sample_rate", "tgt_sample_rate", "n_fft", "hop_length",
               "f_min", "f_max", "log_floor"}
    _reject_unknown(section, allowed, "the frontend section")
    src_rate = int(section.pop("src_sample_rate",
                               profile["src_sample_rate"]))
    tgt_rate = int(section.pop("tgt_sample_rate",
                               profile["tgt_sample_rate"]))
    _require(src_rate > 0 and tgt_rate > 0, "sample rates must be positive")
    base = FrontendConfig.for_rate(tgt_rate)
    fcfg = FrontendConfig(n_fft=section.get("n_fft", base.n_fft),
                          hop_length=section.get("hop_length",
                                                 base.hop_length),
                          f_min=section.get("f_min", base.f_min),
                          f_max=section.get("f_max", base.f_max),
                          log_floor=section.get("log_floor", base.log_floor))
    return fcfg, src_rate, tgt_rate


def _resolve_paths(section: dict, base_dir: Path) -> RunPaths:
    section = dict(section)
    allowed = {f.name for f in dataclasses.fields(RunPaths)}
    _reject_unknown(section, allowed, "the paths section")
    for key in _PATH_KEYS:
        if section.get(key):
            resolved = Path(section[key])
            if not resolved.is_absolute():
                resolved = base_dir / resolved
            _require(resolved.exists(),
                     f"paths.{key}: {resolved} does not exist")
            section[key] = str(resolved)
    for key in _COMMAND_KEYS:
        if key in section:
            cmd = section[key]
            _require(isinstance(cmd, list) and cmd
                     and all(isinstance(a, str) for a in cmd),
                     f"paths.{key} must be a non-empty list of strings")
    return RunPaths(**section)


def config_from_dict(doc: dict, base_dir=".") -> RunConfig:
    """Validate and resolve a parsed config document."""
    _require(isinstance(doc, dict), "config root must be an object")
    doc = dict(doc)
    _reject_unknown(doc, {"profile", "seed", "model", "stages", "frontend",
                          "paths"}, "the config root")
    profile_name = doc.get("profile", "toy")
    _require(profile_name in PROFILES,
             f"profile {profile_name!r} not in {sorted(PROFILES)}")
    profile = PROFILES[profile_name]
    seed = doc.get("seed", 0)
    _require(isinstance(seed, int) and seed >= 0,
             "seed must be a non-negative integer")

    model = _resolve_model(profile, doc.get("model", {}))
    raw_stages = doc.get("stages", [])
    _require(isinstance(raw_stages, list), "stages must be a list")
    stages = [_resolve_stage(profile, seed, entry, i)
              for i, entry in enumerate(raw_stages)]
    _check_stage_order(stages)
    frontend, src_rate, tgt_rate = _resolve_frontend(
        profile, doc.get("frontend", {}))
    paths = _resolve_paths(doc.get("paths", {}), Path(base_dir))
    return RunConfig(model=model, stages=stages, frontend=frontend,
                     paths=paths, seed=seed, profile=profile_name,
                     src_sample_rate=src_rate, tgt_sample_rate=tgt_rate)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"config {path} is not valid JSON: {e}")
    return config_from_dict(doc, path.parent)
