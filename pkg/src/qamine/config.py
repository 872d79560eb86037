"""Flat ``key=value`` pipeline configuration.

Keys carry a section prefix, for example::

    seed=7
    sim.impressions_per_pair=50
    sim.irrelevant.p_ot_only=0.30
    agg.sat_ms=30000
    weak.tau_high=0.6
    qa.pre.epochs=5

``#`` starts a comment line. Unknown keys and bad values raise ConfigError
with the offending line number. Omitted keys keep their defaults.
"""

from __future__ import annotations

import dataclasses
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable

from . import qa
from .errors import ConfigError, QamineError
from .features import FEATURE_INDEX
from .pipeline import PipelineConfig
from .session import TerminalClickPolicy
from .simulator import BehaviorProfile, SimConfig


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_feature(text: str) -> str:
    if text not in FEATURE_INDEX:
        raise ValueError(f"unknown feature {text!r}")
    return text


_PIPELINE_KEYS: dict[str, Callable[[str], Any]] = {
    "n_feedback": int,
    "n_pool": int,
    "n_finetune": int,
    "n_test": int,
    "weak_cap": int,
    "feedback_model": str,
    "baseline_feature": _parse_feature,
    "chunk_pairs": int,
}
_SIM_KEYS: dict[str, Callable[[str], Any]] = {
    "positive_rate": float,
    "impressions_per_pair": float,
    "judge_error_rate": float,
    "n_judges": int,
    "vocab_size": int,
    "generic_vocab_fraction": float,
    "generic_token_rate": float,
    "generic_leak": float,
    "pair_flip_rate": float,
    "multi_impression_sessions": _parse_bool,
    "id_prefix": str,
}
_PROFILE_KEYS = {f.name for f in dataclasses.fields(BehaviorProfile)}
_TRAIN_KEYS: dict[str, Callable[[str], Any]] = {
    "epochs": int,
    "learning_rate": float,
    "l2": float,
    "batch_size": int,
    "loss": qa.Loss,
}


def parse_pairs(text: str) -> list[tuple[int, str, str]]:
    out = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {line_no}: empty key")
        out.append((line_no, key, value))
    return out


class _Builder:
    def __init__(self) -> None:
        self.seed: int | None = None
        self.pipeline: dict[str, Any] = {}
        self.sim: dict[str, Any] = {}
        self.passage_length = list(SimConfig().passage_length)
        self.profiles: dict[str, dict[str, float]] = {"relevant": {}, "irrelevant": {}}
        self.agg: dict[str, Any] = {}
        self.terminal_policy: TerminalClickPolicy | None = None
        self.weak: dict[str, Any] = {}
        self.train: dict[str, dict[str, Any]] = {"pre": {}, "fine": {}}

    def set(self, key: str, value: str) -> None:
        parts = key.split(".")
        head, rest = parts[0], parts[1:]
        if head == "seed" and not rest:
            self.seed = int(value)
        elif head == "pipeline" and len(rest) == 1 and rest[0] in _PIPELINE_KEYS:
            self.pipeline[rest[0]] = _PIPELINE_KEYS[rest[0]](value)
        elif head == "sim" and len(rest) == 1 and rest[0] in _SIM_KEYS:
            self.sim[rest[0]] = _SIM_KEYS[rest[0]](value)
        elif head == "sim" and len(rest) == 1 and rest[0] in ("passage_min", "passage_max"):
            self.passage_length[rest[0] == "passage_max"] = int(value)
        elif head == "sim" and len(rest) == 2 and rest[0] in self.profiles and rest[1] in _PROFILE_KEYS:
            self.profiles[rest[0]][rest[1]] = float(value)
        elif head == "agg" and rest == ["sat_ms"]:
            self.agg["sat_threshold_ms"] = int(value)
        elif head == "agg" and rest == ["min_impressions"]:
            self.agg["min_impressions"] = int(value)
        elif head == "agg" and rest == ["terminal_click_policy"]:
            self.terminal_policy = TerminalClickPolicy(value)
        elif head == "weak" and rest in (["tau_high"], ["tau_low"]):
            self.weak[rest[0]] = float(value)
        elif head == "weak" and rest == ["balance"]:
            self.weak["balance"] = _parse_bool(value)
        elif head == "qa" and len(rest) == 2 and rest[0] in self.train and rest[1] in _TRAIN_KEYS:
            self.train[rest[0]][rest[1]] = _TRAIN_KEYS[rest[1]](value)
        else:
            raise KeyError(key)

    def build(self, base: PipelineConfig) -> PipelineConfig:
        sim = base.sim
        sim = replace(
            sim,
            relevant=replace(sim.relevant, **self.profiles["relevant"]),
            irrelevant=replace(sim.irrelevant, **self.profiles["irrelevant"]),
            passage_length=tuple(self.passage_length),
            **self.sim,
        )
        cfg = replace(
            base,
            sim=sim,
            aggregation=replace(base.aggregation, **self.agg),
            weak=replace(base.weak, **self.weak),
            pretrain=replace(base.pretrain, **self.train["pre"]),
            finetune=replace(base.finetune, **self.train["fine"]),
            **self.pipeline,
        )
        if self.terminal_policy is not None:
            cfg = replace(cfg, terminal_policy=self.terminal_policy)
        return cfg.with_seed(self.seed if self.seed is not None else cfg.seed)


def loads_config(text: str, base: PipelineConfig | None = None) -> PipelineConfig:
    b = _Builder()
    for line_no, key, value in parse_pairs(text):
        try:
            b.set(key, value)
        except KeyError:
            raise ConfigError(f"line {line_no}: unknown key {key!r}") from None
        except ValueError as exc:
            raise ConfigError(f"line {line_no}: bad value for {key!r}: {exc}") from None
    try:
        return b.build(base or PipelineConfig())
    except (ValueError, QamineError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path) -> PipelineConfig:
    return loads_config(Path(path).read_text(encoding="utf-8"))


def dumps_config(cfg: PipelineConfig) -> str:
    """Every key with its effective value; ``loads_config`` round-trips it."""
    lines = [f"seed={cfg.seed}"]
    for key in _PIPELINE_KEYS:
        lines.append(f"pipeline.{key}={getattr(cfg, key)}")
    for key in _SIM_KEYS:
        value = getattr(cfg.sim, key)
        lines.append(f"sim.{key}={str(value).lower() if isinstance(value, bool) else value}")
    lines.append(f"sim.passage_min={cfg.sim.passage_length[0]}")
    lines.append(f"sim.passage_max={cfg.sim.passage_length[1]}")
    for cls in ("relevant", "irrelevant"):
        prof = getattr(cfg.sim, cls)
        for f in dataclasses.fields(BehaviorProfile):
            lines.append(f"sim.{cls}.{f.name}={getattr(prof, f.name)!r}")
    lines.append(f"agg.sat_ms={cfg.aggregation.sat_threshold_ms}")
    lines.append(f"agg.min_impressions={cfg.aggregation.min_impressions}")
    lines.append(f"agg.terminal_click_policy={cfg.terminal_policy.value}")
    lines.append(f"weak.tau_high={cfg.weak.tau_high!r}")
    lines.append(f"weak.tau_low={cfg.weak.tau_low!r}")
    lines.append(f"weak.balance={str(cfg.weak.balance).lower()}")
    for stage, tc in (("pre", cfg.pretrain), ("fine", cfg.finetune)):
        for key in _TRAIN_KEYS:
            value = getattr(tc, key)
            lines.append(f"qa.{stage}.{key}={value.value if isinstance(value, qa.Loss) else repr(value)}")
    return "\n".join(lines) + "\n"


def default_config_path(name: str = "default") -> Path:
    return Path(__file__).with_name("configs") / f"{name}.cfg"

