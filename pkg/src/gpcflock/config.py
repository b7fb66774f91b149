"""Scenario configuration: validation, initial data and (de)serialization."""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .control import ControlConfig, SelectiveWeight
from .dynamics import InteractionKernel
from .polychaos import FAMILIES, HERMITE
from .rate import RateModel, SeparableNormal, TimeVaryingNormal, native_family, rate_from_dict, rate_to_dict

INTEGRATORS = ("rk4", "mpc-euler")
ORDERINGS = ("gpc-first", "control-first")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class InitConfig:
    """Seeded initial data.

    ``velocities`` / ``positions`` are law dicts:
    ``{"law": "normal", "mean": m, "var": s2}``,
    ``{"law": "clusters", "centers": [5, -5], "var": s2}`` (agents split
    evenly, every coordinate drawn around the cluster center),
    ``{"law": "values", "values": [[...], ...]}`` or ``{"law": "constant", "value": c}``.
    """

    seed: int = 0
    velocities: dict = field(default_factory=lambda: {"law": "normal", "mean": 2.0, "var": 1.0})
    positions: dict = field(default_factory=lambda: {"law": "constant", "value": 0.0})


@dataclass(frozen=True)
class OutputConfig:
    stride: int = 1
    dir: str = "out"
    format: str = "csv"


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scenario"
    N: int = 10
    d: int = 1
    M: int = 6
    T: float = 1.0
    dt: float = 1e-3
    integrator: str = "rk4"
    ordering: str = "gpc-first"
    family: str | None = None
    kernel: InteractionKernel = InteractionKernel()
    rate: RateModel = SeparableNormal(2.0, math.sqrt(0.5))
    control: ControlConfig | None = None
    init: InitConfig = InitConfig()
    output: OutputConfig = OutputConfig()
    # appears in two figure captions without definition; recorded, never used
    zeta: float | None = None

    def __post_init__(self):
        problems = []
        if self.N < 1:
            problems.append("N must be >= 1")
        if self.d < 1:
            problems.append("d must be >= 1")
        if self.M < 0:
            problems.append("M must be >= 0")
        if not self.T > 0:
            problems.append("T must be positive")
        if not self.dt > 0:
            problems.append("dt must be positive")
        if self.integrator not in INTEGRATORS:
            problems.append(f"integrator must be one of {INTEGRATORS}")
        if self.ordering not in ORDERINGS:
            problems.append(f"ordering must be one of {ORDERINGS}")
        if self.family is not None and self.family not in FAMILIES:
            problems.append(f"family must be one of {FAMILIES}")
        if self.output.stride < 1:
            problems.append("output.stride must be >= 1")
        if self.output.format not in ("csv", "json"):
            problems.append("output.format must be csv or json")
        if self.control is not None and len(self.control.vd) not in (1, self.d):
            problems.append("control.vd must have 1 or d components")
        if problems:
            raise ConfigError("; ".join(problems))

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def basis_family(self) -> str:
        if self.family is not None:
            return self.family
        # unimplemented native families fall through so the rate check can explain
        native = native_family(self.rate)
        return native if native in FAMILIES else HERMITE

    @property
    def controlled(self) -> bool:
        return self.control is not None and self.control.active

    def resolved_rate(self) -> RateModel:
        """Rate with the singular-start guard set to the time step when missing."""
        if isinstance(self.rate, TimeVaryingNormal) and self.rate.t_eps is None:
            return dataclasses.replace(self.rate, t_eps=self.dt)
        return self.rate

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    # serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "N": self.N,
            "d": self.d,
            "M": self.M,
            "T": self.T,
            "dt": self.dt,
            "integrator": self.integrator,
            "ordering": self.ordering,
            "family": self.family,
            "kernel": self.kernel.to_dict(),
            "rate": rate_to_dict(self.rate),
            "control": _control_to_dict(self.control),
            "init": dataclasses.asdict(self.init),
            "output": dataclasses.asdict(self.output),
            "zeta": self.zeta,
        }
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        data = dict(data)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        try:
            if "kernel" in data:
                data["kernel"] = InteractionKernel(**data["kernel"])
            if "rate" in data:
                data["rate"] = rate_from_dict(data["rate"])
            if "control" in data:
                data["control"] = _control_from_dict(data["control"])
            if "init" in data:
                data["init"] = InitConfig(**data["init"])
            if "output" in data:
                data["output"] = OutputConfig(**data["output"])
            for key in ("N", "d", "M"):
                if key in data:
                    data[key] = _as_int(data[key], key)
            for key in ("T", "dt"):
                if key in data:
                    data[key] = float(data[key])
            return cls(**data)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None


def _as_int(value, key):
    if isinstance(value, bool) or int(value) != value:
        raise ConfigError(f"{key} must be an integer")
    return int(value)


def _control_to_dict(c: ControlConfig | None) -> dict | None:
    if c is None:
        return None
    if c.weight.kind == "custom":
        raise ConfigError("custom selective weights are not serializable")
    return {
        "vd": list(c.vd),
        "kappa": c.kappa,
        "nu": c.nu,
        "weight": c.weight.kind,
        "bound": c.weight.bound,
        "box": None if c.box is None else list(c.box),
    }


def _control_from_dict(data: dict | None) -> ControlConfig | None:
    if data is None:
        return None
    data = dict(data)
    weight = data.pop("weight", "nonselective")
    bound = float(data.pop("bound", math.inf))
    vd = data.pop("vd", 0.0)
    kappa = data.pop("kappa", None)
    nu = data.pop("nu", None)
    box = data.pop("box", None)
    if data:
        raise ConfigError(f"unknown control fields: {sorted(data)}")
    if weight == "none":
        return ControlConfig(vd=vd, kappa=math.inf)
    kappa = None if kappa is None else float(kappa)
    if kappa is None and nu is None:
        raise ConfigError("control needs kappa or nu")
    return ControlConfig(
        vd=vd,
        kappa=kappa,
        nu=None if nu is None else float(nu),
        weight=SelectiveWeight(weight, bound),
        box=None if box is None else tuple(float(b) for b in box),
    )


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    text = path.read_text()
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return ScenarioConfig.from_dict(data)


def dump_config(config: ScenarioConfig, path: str | Path) -> None:
    path = Path(path)
    data = config.to_dict()
    if path.suffix == ".json":
        path.write_text(json.dumps(data, indent=2) + "\n")
    else:
        path.write_text(yaml.safe_dump(data, sort_keys=False))


# initial data ---------------------------------------------------------------


def _draw(law: dict, rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    kind = law.get("law")
    if kind == "normal":
        return law.get("mean", 0.0) + math.sqrt(law.get("var", 1.0)) * rng.standard_normal((n, d))
    if kind == "clusters":
        centers = law.get("centers", [5.0, -5.0])
        labels = np.arange(n) * len(centers) // n
        base = np.asarray(centers, dtype=float)[labels][:, None]
        return base + math.sqrt(law.get("var", 0.1)) * rng.standard_normal((n, d))
    if kind == "values":
        values = np.asarray(law["values"], dtype=float).reshape(n, -1)
        if values.shape != (n, d):
            raise ConfigError(f"explicit values have shape {values.shape}, expected {(n, d)}")
        return values
    if kind == "constant":
        return np.full((n, d), float(law.get("value", 0.0)))
    raise ConfigError(f"unknown initial law {kind!r}")


def initial_state(config: ScenarioConfig) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic (positions, velocities), each (N, d), from the seed."""
    pos_seq, vel_seq = np.random.SeedSequence(config.init.seed).spawn(2)
    x0 = _draw(config.init.positions, np.random.default_rng(pos_seq), config.N, config.d)
    v0 = _draw(config.init.velocities, np.random.default_rng(vel_seq), config.N, config.d)
    return x0, v0

