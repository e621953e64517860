"""Profiles and runtime configuration.

A profile pins the instance shape the deployment serves (node count,
supported depths, qubit ceiling, corpus families); the app config adds
metric mode, generator knobs, optimizer schedule, daemon knobs, and
service binding.  Configuration loads from a JSON file with environment
overrides (QAOA_WARMSTART_*), and every field has a default so the
package works with no file at all.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from .generators import (
    DEFAULT_COEFFICIENT,
    AsymptoticSchedule,
    GeneratorSettings,
    load_schedules,
)
from .metric import MODE_SIMPLIFIED, METRIC_MODES, MetricMatrix, load_metric
from .optim import METHOD_QUASI_NEWTON, METHOD_SIMPLEX, OptSchedule, ScheduleEntry
from .sources import DISCRETE_UNIFORM, WeightFamily


class ConfigError(ValueError):
    """Unknown profile, bad key, or malformed config file."""


@dataclass(frozen=True)
class Profile:
    name: str
    node_count: int | None
    supported_depths: tuple[int, ...]
    qubit_ceiling: int
    corpus_families: tuple[WeightFamily, ...]
    edge_count_range: tuple[int, int]


# The competition deployment: 12-node graphs, depths 4 and 8, integer
# uniform weights.  "generic" infers node counts from the data instead.
PROFILES = {
    "hackathon": Profile(
        name="hackathon",
        node_count=12,
        supported_depths=(4, 8),
        qubit_ceiling=20,
        corpus_families=(WeightFamily(DISCRETE_UNIFORM, (1, 10)),),
        edge_count_range=(12, 60),
    ),
    "generic": Profile(
        name="generic",
        node_count=None,
        supported_depths=(1, 2, 4, 8),
        qubit_ceiling=20,
        corpus_families=(WeightFamily(DISCRETE_UNIFORM, (1, 10)),),
        edge_count_range=(12, 60),
    ),
}


@dataclass(frozen=True)
class DaemonConfig:
    enabled: bool = False
    children_per_parent: int = 3
    max_generation: int = 8
    weight_sigma: float = 0.1
    edge_toggle_prob: float = 0.3
    max_mutations: int = 2
    depths: tuple[int, ...] = (4, 8)
    factor_budget_share: int = 4
    save_every: int = 50
    workers: int = 1
    evals_per_second: float | None = None


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    max_request_bytes: int = 1_048_576
    request_timeout_s: float = 30.0
    static_dir: str | None = None


def default_opt_schedule() -> OptSchedule:
    return OptSchedule(
        entries=(
            ScheduleEntry(METHOD_SIMPLEX, 120),
            ScheduleEntry(METHOD_QUASI_NEWTON, 60),
        ),
        epsilon=1e-4,
        max_rounds=3,
    )


@dataclass(frozen=True)
class AppConfig:
    profile: Profile = field(default_factory=lambda: PROFILES["hackathon"])
    seed: int = 0
    stores_dir: Path = Path("stores")
    metric_mode: str = MODE_SIMPLIFIED
    metric_path: str | None = None
    ks: tuple[int, ...] = (1, 2)
    coefficient: float = DEFAULT_COEFFICIENT
    alpha_exponent: int = -1
    schedules: dict[int, AsymptoticSchedule] = field(default_factory=load_schedules)
    opt_schedule: OptSchedule = field(default_factory=default_opt_schedule)
    daemon: DaemonConfig = field(default_factory=DaemonConfig)
    service: ServiceConfig = field(default_factory=ServiceConfig)

    def __post_init__(self):
        if self.metric_mode not in METRIC_MODES:
            raise ConfigError(f"unknown metric mode {self.metric_mode!r}")
        missing = [d for d in self.profile.supported_depths if d not in self.schedules]
        if missing:
            raise ConfigError(f"no schedule for supported depth(s) {missing}")

    @property
    def params_path(self) -> Path:
        return self.stores_dir / "params.jsonl"

    @property
    def factors_path(self) -> Path:
        return self.stores_dir / "factors.jsonl"

    def metric_matrix(self) -> MetricMatrix | None:
        if self.metric_path is None:
            return None
        return load_metric(self.metric_path)

    def generator_settings(self) -> GeneratorSettings:
        return GeneratorSettings(
            schedules=self.schedules,
            ks=self.ks,
            metric_mode=self.metric_mode,
            metric=self.metric_matrix(),
            coefficient=self.coefficient,
            alpha_exponent=self.alpha_exponent,
            qubit_ceiling=self.profile.qubit_ceiling,
        )


def _family_from_obj(obj: dict) -> WeightFamily:
    return WeightFamily(obj["kind"], tuple(obj["params"]))


def _profile_from_obj(obj) -> Profile:
    if isinstance(obj, str):
        if obj not in PROFILES:
            raise ConfigError(f"unknown profile {obj!r}")
        return PROFILES[obj]
    base = PROFILES.get(obj.get("base", "hackathon"))
    if base is None:
        raise ConfigError(f"unknown base profile {obj.get('base')!r}")
    return Profile(
        name=obj.get("name", base.name),
        node_count=obj.get("node_count", base.node_count),
        supported_depths=tuple(obj.get("supported_depths", base.supported_depths)),
        qubit_ceiling=obj.get("qubit_ceiling", base.qubit_ceiling),
        corpus_families=tuple(
            _family_from_obj(f) for f in obj["corpus_families"]
        )
        if "corpus_families" in obj
        else base.corpus_families,
        edge_count_range=tuple(obj.get("edge_count_range", base.edge_count_range)),
    )


def load_config(path=None, env: dict | None = None) -> AppConfig:
    """Build an AppConfig from an optional JSON file plus env overrides.

    Recognized environment variables: QAOA_WARMSTART_PROFILE, _SEED,
    _STORES_DIR, _METRIC_MODE, _HOST, _PORT.
    """
    env = os.environ if env is None else env
    raw = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON: {exc}") from exc

    profile = _profile_from_obj(raw.get("profile", "hackathon"))
    gen = raw.get("generator", {})
    metric_cfg = raw.get("metric", {})
    daemon_raw = raw.get("daemon", {})
    service_raw = raw.get("service", {})

    schedules = load_schedules(gen.get("schedules_file"))
    opt_schedule = (
        OptSchedule.from_dict(raw["optimizer"]) if "optimizer" in raw
        else default_opt_schedule()
    )

    config = AppConfig(
        profile=profile,
        seed=int(raw.get("seed", 0)),
        stores_dir=Path(raw.get("stores_dir", "stores")),
        metric_mode=metric_cfg.get("mode", MODE_SIMPLIFIED),
        metric_path=metric_cfg.get("matrix_file"),
        ks=tuple(gen.get("ks", (1, 2))),
        coefficient=float(gen.get("coefficient", DEFAULT_COEFFICIENT)),
        alpha_exponent=int(gen.get("alpha_exponent", -1)),
        schedules=schedules,
        opt_schedule=opt_schedule,
        daemon=DaemonConfig(
            enabled=bool(daemon_raw.get("enabled", False)),
            children_per_parent=int(daemon_raw.get("children_per_parent", 3)),
            max_generation=int(daemon_raw.get("max_generation", 8)),
            weight_sigma=float(daemon_raw.get("weight_sigma", 0.1)),
            edge_toggle_prob=float(daemon_raw.get("edge_toggle_prob", 0.3)),
            max_mutations=int(daemon_raw.get("max_mutations", 2)),
            depths=tuple(daemon_raw.get("depths", (4, 8))),
            factor_budget_share=int(daemon_raw.get("factor_budget_share", 4)),
            save_every=int(daemon_raw.get("save_every", 50)),
            workers=int(daemon_raw.get("workers", 1)),
            evals_per_second=daemon_raw.get("evals_per_second"),
        ),
        service=ServiceConfig(
            host=service_raw.get("host", "127.0.0.1"),
            port=int(service_raw.get("port", 8080)),
            max_request_bytes=int(service_raw.get("max_request_bytes", 1_048_576)),
            request_timeout_s=float(service_raw.get("request_timeout_s", 30.0)),
            static_dir=service_raw.get("static_dir"),
        ),
    )

    overrides = {}
    if env.get("QAOA_WARMSTART_PROFILE"):
        overrides["profile"] = _profile_from_obj(env["QAOA_WARMSTART_PROFILE"])
    if env.get("QAOA_WARMSTART_SEED"):
        overrides["seed"] = int(env["QAOA_WARMSTART_SEED"])
    if env.get("QAOA_WARMSTART_STORES_DIR"):
        overrides["stores_dir"] = Path(env["QAOA_WARMSTART_STORES_DIR"])
    if env.get("QAOA_WARMSTART_METRIC_MODE"):
        overrides["metric_mode"] = env["QAOA_WARMSTART_METRIC_MODE"]
    if env.get("QAOA_WARMSTART_HOST"):
        overrides["service"] = replace(config.service, host=env["QAOA_WARMSTART_HOST"])
    if env.get("QAOA_WARMSTART_PORT"):
        svc = overrides.get("service", config.service)
        overrides["service"] = replace(svc, port=int(env["QAOA_WARMSTART_PORT"]))
    return replace(config, **overrides) if overrides else config
