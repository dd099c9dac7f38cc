"""Experiment configuration: flat ``key = value`` files with per-task defaults."""
from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from ..affinity import LossConfig
from ..errors import ConfigError


class Task(str, enum.Enum):
    BATCH = "batch"
    RELATION = "relation"


@dataclass
class ExperimentConfig:
    task: Task = Task.BATCH
    data: str = "clusters"
    seed: int = 0
    val_seed: int = 1234
    out: str = "runs/experiment"
    # cluster data
    num_classes: int = 4
    per_class: int = 400
    test_per_class: int = 100
    dim: int = 16
    spread: float = 1.0
    separation: float = 3.0
    val_fraction: float = 0.1
    # cifar
    cifar_dir: str = ""
    subsample_per_class: int = 0
    augment: bool = False
    # relation scenes
    num_scenes: int = 200
    objects_per_scene: int = 8
    proposals_per_scene: int = 24
    proposals_per_object: int = 2
    scene_classes: int = 4
    jitter: float = 0.1
    feature_noise: float = 0.5
    test_fraction: float = 0.2
    recall_ks: tuple[int, ...] = (10, 50, 100)
    # model
    hidden: tuple[int, ...] = (64, 16)
    d_k: int = 16
    # affinity loss
    loss_form: str = "focal"
    gamma: float = 4.0
    lam: float = 0.1
    scope: str = "matrix"
    mask_diagonal: bool = False
    mass_floor: float = 1e-12
    bce_normalize: bool = True
    # optimisation
    batch_size: int = 32
    epochs: int = 20
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 5e-4
    lr_steps: tuple[tuple[int, float], ...] = ()

    def __post_init__(self):
        try:
            self.task = Task(self.task)
        except ValueError:
            raise ConfigError(f"unknown task {self.task!r}") from None
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        # batch targets pair up samples; relation targets pair proposals inside one scene
        if self.task is Task.BATCH and self.lam > 0 and self.batch_size < 2:
            raise ConfigError("affinity supervision needs batch_size >= 2")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        self.loss  # validates the loss fields

    @property
    def loss(self) -> LossConfig:
        return LossConfig(
            form=self.loss_form,
            gamma=self.gamma,
            lam=self.lam,
            mass_floor=self.mass_floor,
            scope=self.scope,
            mask_diagonal=self.mask_diagonal,
            bce_normalize=self.bce_normalize,
        )

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["task"] = self.task.value
        return d

    def dumps(self) -> str:
        return "".join(f"{k} = {format_value(v)}\n" for k, v in self.as_dict().items())


# Relation-task overrides: attention supervision uses lambda 0.01 and gamma 2,
# and a step covers a couple of scenes rather than a batch of samples.
TASK_DEFAULTS: dict[Task, dict] = {
    Task.BATCH: {},
    Task.RELATION: dict(
        data="scenes",
        gamma=2.0,
        lam=0.01,
        hidden=(32,),
        batch_size=2,
        epochs=20,
        lr=0.02,
    ),
}

FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def format_value(v) -> str:
    if isinstance(v, enum.Enum):
        return v.value
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ",".join(":".join(map(str, x)) if isinstance(x, (tuple, list)) else str(x) for x in v)
    return str(v)


def _parse_bool(s: str) -> bool:
    s = s.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def parse_value(key: str, text: str):
    if key not in FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    text = text.strip()
    ftype = str(FIELDS[key].type)
    try:
        if key == "lr_steps":
            if not text:
                return ()
            steps = []
            for part in text.split(","):
                e, lr = part.split(":")
                steps.append((int(e), float(lr)))
            return tuple(steps)
        if ftype.startswith("tuple[int"):
            return tuple(int(p) for p in text.split(",") if p.strip())
        if ftype == "bool":
            return _parse_bool(text)
        if ftype == "int":
            return int(text)
        if ftype == "float":
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {text!r} ({exc})") from None
    return text


def parse_config_text(text: str, source: str = "<config>") -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key] = parse_value(key, value)
    return values


def build_config(values: Mapping | None = None, **overrides) -> ExperimentConfig:
    """Config from parsed values: task defaults first, then ``values``, then ``overrides``."""
    merged = dict(values or {})
    merged.update(overrides)
    try:
        task = Task(merged.get("task", Task.BATCH))
    except ValueError:
        raise ConfigError(f"unknown task {merged.get('task')!r}") from None
    unknown = set(merged) - set(FIELDS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {**TASK_DEFAULTS[task], **merged, "task": task}
    try:
        return ExperimentConfig(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path=None, overrides: Mapping[str, str] | None = None) -> ExperimentConfig:
    """Read a config file (optional) and apply string overrides such as CLI flags."""
    values = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        values = parse_config_text(text, str(path))
    for k, v in (overrides or {}).items():
        values[k] = parse_value(k, v) if isinstance(v, str) else v
    return build_config(values)
