"""Line-oriented experiment configuration with ablation presets.

A config file holds ``key = value`` lines with dotted section keys::

    env.name = two_gap_corridor
    env.p_occ = 0.4
    planner.M = 4
    seeds = 0, 1, 2

``#`` starts a comment. Resolution applies the file, then command-line
overrides, then the ablation rewrite (so a preset always holds), and is a pure
function of those three inputs.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

from ..core import PlannerConfig, ValueConfig
from ..learner.loop import Schedule
from ..worldmodel.envs import CorridorSpec, ReacherSpec

ABLATIONS = ("full", "no_gmm", "fixed_lambda", "horizon_5", "horizon_15", "no_plan")
REQUIRED = ("env.name", "seeds")
ENV_SPECS = {"two_gap_corridor": CorridorSpec, "multi_goal_reacher": ReacherSpec}
MODEL_FAMILIES = ("matched", "linear", "nonlinear")


class ConfigError(ValueError):
    """Invalid or incomplete configuration; ``field`` names the offending key."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


def parse_lines(text: str, source: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{n}: empty key")
        out[key] = value
    return out


def load_file(path: str | Path) -> dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_lines(text, str(path))


def parse_override(item: str) -> tuple[str, str]:
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like key=value")
    k, v = item.split("=", 1)
    return k.strip(), v.strip()


def apply_ablation(raw: dict[str, str], tag: str) -> dict[str, str]:
    """Deterministic rewrite of a raw config for an ablation tag."""
    if tag not in ABLATIONS:
        raise ConfigError(f"unknown ablation {tag!r}; choose from {', '.join(ABLATIONS)}", "ablation")
    out = dict(raw)
    out["ablation"] = tag
    if tag == "no_gmm":
        out["planner.M"] = "1"
        out.pop("planner.alpha_schedule", None)
    elif tag == "fixed_lambda":
        lam_max = out.get("value.lambda_max", str(ValueConfig.lambda_max))
        out["value.lambda_min"] = lam_max
        out["value.lambda_max"] = lam_max
    elif tag.startswith("horizon_"):
        out["planner.H"] = tag.split("_", 1)[1]
    elif tag == "no_plan":
        out["schedule.plan"] = "false"
    return out


def _convert(text: str, like: Any, key: str):
    try:
        if isinstance(like, bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(like, int):
            return int(text)
        if isinstance(like, float):
            return float(text)
        if isinstance(like, tuple):
            items = [s.strip() for s in text.split(",") if s.strip()]
            sample = like[0] if like else 0.0
            return tuple(type(sample)(s) for s in items)
        return text
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {text!r}", key) from exc


def _section(raw: dict[str, str], prefix: str, cls, defaults: dict[str, Any] | None = None) -> dict[str, Any]:
    known = {f.name: f for f in fields(cls)}
    kwargs: dict[str, Any] = {}
    for key, text in raw.items():
        if not key.startswith(prefix + "."):
            continue
        name = key[len(prefix) + 1 :]
        if name not in known:
            raise ConfigError(f"unknown key {key}", key)
        default = getattr(cls, name, None) if defaults is None else defaults.get(name)
        if name == "alpha_schedule":
            default = (0.0,)
        kwargs[name] = _convert(text, default, key)
    return kwargs


@dataclass(frozen=True)
class ModelSettings:
    family: str = "matched"
    d_h: int = 4
    d_z: int = 4
    hidden: int = 16


@dataclass(frozen=True)
class NetSettings:
    critic_hidden: tuple[int, ...] = (32, 32)
    critic_out_scale: float = 1.0
    actor_hidden: tuple[int, ...] = (32, 32)
    actor_init_std: float = 0.6


@dataclass(frozen=True)
class ExperimentConfig:
    env_name: str
    env_overrides: tuple[tuple[str, Any], ...]
    model: ModelSettings
    nets: NetSettings
    planner: PlannerConfig
    value: ValueConfig
    schedule: Schedule
    seeds: tuple[int, ...]
    ablation: str
    raw: tuple[tuple[str, str], ...]

    def canonical(self) -> str:
        """Stable text rendering of every resolved setting (one ``key = value`` per line)."""
        lines = [f"env.name = {self.env_name}"]
        lines += [f"env.{k} = {_fmt(v)}" for k, v in self.env_overrides]
        for prefix, obj in (("model", self.model), ("nets", self.nets), ("planner", self.planner), ("value", self.value), ("schedule", self.schedule)):
            for f in fields(obj):
                if f.name.startswith("_"):
                    continue
                lines.append(f"{prefix}.{f.name} = {_fmt(getattr(obj, f.name))}")
        lines.append(f"seeds = {_fmt(self.seeds)}")
        lines.append(f"ablation = {self.ablation}")
        return "\n".join(lines) + "\n"

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def with_seeds(self, seeds: tuple[int, ...]) -> ExperimentConfig:
        from dataclasses import replace

        return replace(self, seeds=tuple(seeds))

    def env_kwargs(self) -> dict[str, Any]:
        return dict(self.env_overrides)


def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def resolve(raw: dict[str, str], ablation: str | None = None, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    """Turn raw key/value pairs into a validated :class:`ExperimentConfig`."""
    merged = dict(raw)
    merged.update(overrides or {})
    tag = ablation or merged.get("ablation", "full")
    merged = apply_ablation(merged, tag)
    for key in REQUIRED:
        if key not in merged or merged[key] == "":
            raise ConfigError(f"missing required field {key}", key)
    allowed_roots = {"env", "model", "nets", "planner", "value", "schedule"}
    for key in merged:
        root = key.split(".", 1)[0]
        if key not in ("seeds", "ablation") and (root not in allowed_roots or "." not in key):
            raise ConfigError(f"unknown key {key}", key)
    env_name = merged["env.name"]
    if env_name not in ENV_SPECS:
        raise ConfigError(f"unknown environment {env_name!r}", "env.name")
    spec_cls = ENV_SPECS[env_name]
    env_kwargs = {k: v for k, v in merged.items() if k.startswith("env.") and k != "env.name"}
    env_over = _section(env_kwargs, "env", spec_cls)
    try:
        model = ModelSettings(**_section(merged, "model", ModelSettings))
        nets = NetSettings(**_section(merged, "nets", NetSettings))
        pkw = _section(merged, "planner", PlannerConfig)
        planner = PlannerConfig(**pkw)
        value = ValueConfig(**_section(merged, "value", ValueConfig))
        schedule = Schedule(**_section(merged, "schedule", Schedule))
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if model.family not in MODEL_FAMILIES:
        raise ConfigError(f"unknown model family {model.family!r}", "model.family")
    try:
        seeds = tuple(int(s) for s in merged["seeds"].split(",") if s.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value for seeds: {merged['seeds']!r}", "seeds") from exc
    if not seeds:
        raise ConfigError("missing required field seeds", "seeds")
    return ExperimentConfig(
        env_name, tuple(sorted(env_over.items())), model, nets, planner, value, schedule, seeds, tag,
        tuple(sorted(merged.items())),
    )


def load(path: str | Path, ablation: str | None = None, overrides: list[str] | dict[str, str] | None = None) -> ExperimentConfig:
    raw = load_file(path)
    if isinstance(overrides, list):
        overrides = dict(parse_override(o) for o in overrides)
    return resolve(raw, ablation, overrides)


def from_canonical(text: str) -> ExperimentConfig:
    """Re-resolve a config previously written by :meth:`ExperimentConfig.canonical`."""
    raw = parse_lines(text)
    return resolve(raw, raw.get("ablation"))


def to_json(cfg: ExperimentConfig) -> str:
    return json.dumps({"hash": cfg.hash, "config": cfg.canonical()})
