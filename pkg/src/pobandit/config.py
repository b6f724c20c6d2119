"""Experiment configuration files and the bundled machine fixtures.

Configs are JSON documents (conventionally *.cfg) validated by pydantic.
One file describes one experiment: shared discount/horizon/run parameters
plus one or more named machines, each a list of arms.  Loading normalizes
each arm to the internal convention (worst-state reward 0, rewards
ascending) and logs every adjustment so cross-arm comparability stays
auditable.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .model import Arm, BanditInstance, ModelError


class ConfigError(ValueError):
    """Configuration file rejected, with location context."""


class ArmConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    label: str
    transition: list[list[float]]
    rewards: list[float]
    initial_belief: list[float]


class MachineConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    name: str
    arms: list[ArmConfig] = Field(min_length=1)


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    name: str
    discount: float = Field(gt=0.0, lt=1.0)
    horizon: int = Field(ge=0)
    runs: int = Field(ge=1)
    select_count: int = Field(ge=1)
    policies: list[str] = Field(min_length=1)
    l_max: int = 500
    seed: int = 0
    output_path: str | None = None
    machines: list[MachineConfig] = Field(min_length=1)

    def machine(self, name: str | None) -> MachineConfig:
        if name is None:
            return self.machines[0]
        for m in self.machines:
            if m.name == name:
                return m
        known = ", ".join(m.name for m in self.machines)
        raise ConfigError(f"no machine named {name!r}; available: {known}")

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(), sort_keys=True, separators=(",", ":"))

    def content_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]


@dataclass
class LoadedMachine:
    """A machine turned into a validated BanditInstance, plus normalization log."""

    machine_name: str
    instance: BanditInstance
    reward_shifts: dict[str, float] = field(default_factory=dict)
    state_relabelings: dict[str, tuple[int, ...]] = field(default_factory=dict)


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse and validate a config file; errors carry file/field locations."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return parse_config(raw, source=str(p))


def parse_config(raw: dict, source: str = "<inline>") -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        lines = []
        for err in exc.errors():
            loc = ".".join(str(part) for part in err["loc"]) or "<root>"
            lines.append(f"  {loc}: {err['msg']}")
        raise ConfigError(f"{source}: invalid config\n" + "\n".join(lines)) from exc


def save_config(config: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config.model_dump(), indent=2) + "\n")


def _normalize_arm(spec: ArmConfig, machine: str) -> tuple[Arm, float, tuple[int, ...] | None]:
    """Build an Arm, shifting/relabeling rewards into the internal convention."""
    rewards = np.asarray(spec.rewards, dtype=float)
    transition = np.asarray(spec.transition, dtype=float)
    belief = np.asarray(spec.initial_belief, dtype=float)

    relabeling: tuple[int, ...] | None = None
    if np.any(np.diff(rewards) < 0.0):
        order = tuple(int(i) for i in np.argsort(rewards, kind="stable"))
        rewards = rewards[list(order)]
        transition = transition[np.ix_(order, order)]
        belief = belief[list(order)]
        relabeling = order

    shift = float(rewards[0])
    if shift != 0.0:
        rewards = rewards - shift

    try:
        arm = Arm(transition, rewards, belief, label=spec.label)
    except ModelError as exc:
        raise ConfigError(f"machine {machine!r}, arm {spec.label!r}: {exc}") from exc
    return arm, shift, relabeling


def build_machine(
    config: ExperimentConfig,
    machine_name: str | None = None,
    select_count: int | None = None,
    discount: float | None = None,
) -> LoadedMachine:
    """Validated BanditInstance for one machine, with overrides applied."""
    machine = config.machine(machine_name)
    arms = []
    shifts: dict[str, float] = {}
    relabelings: dict[str, tuple[int, ...]] = {}
    for spec in machine.arms:
        arm, shift, relabeling = _normalize_arm(spec, machine.name)
        arms.append(arm)
        if shift != 0.0:
            shifts[spec.label] = shift
        if relabeling is not None:
            relabelings[spec.label] = relabeling
    try:
        instance = BanditInstance(
            arms=tuple(arms),
            select_count=config.select_count if select_count is None else select_count,
            discount=config.discount if discount is None else discount,
        )
    except ModelError as exc:
        raise ConfigError(f"machine {machine.name!r}: {exc}") from exc
    return LoadedMachine(
        machine_name=machine.name,
        instance=instance,
        reward_shifts=shifts,
        state_relabelings=relabelings,
    )


def fixture_path(name: str) -> Path:
    """Path of a bundled fixture, e.g. 'experiment1' or 'experiment1.cfg'."""
    fname = name if name.endswith(".cfg") else f"{name}.cfg"
    ref = resources.files("pobandit.fixtures").joinpath(fname)
    with resources.as_file(ref) as p:
        if not p.exists():
            raise ConfigError(f"no bundled fixture named {fname!r}")
        return Path(p)


def load_fixture(name: str) -> ExperimentConfig:
    return load_config(fixture_path(name))
