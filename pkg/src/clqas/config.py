"""Run configuration: flat dotted-key schema, strict validation, stable hashing.

Config files are TOML whose keys flatten to the dotted names below (either
`train.lr = 3e-3` at top level or `[train]` tables). Unknown keys are
rejected at load so silent hyperparameter typos cannot survive; numeric
ranges are validated. The config hash covers every key that shapes results
except the method/seed/output selectors, so records produced for different
methods of one experiment aggregate under one hash.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["RunConfig", "ConfigError", "load_config", "flatten"]

METHODS = ("naive_vqc", "qas_no_cl", "cl_qas")
DATASETS = ("financial", "ecg")


class ConfigError(ValueError):
    """Invalid or unknown configuration input (CLI exit code 2)."""


def _probability(lo=0.0, hi=1.0):
    def check(key, value):
        if not lo <= value <= hi:
            raise ConfigError(f"{key} must be in [{lo}, {hi}], got {value}")

    return check


def _positive(key, value):
    if value <= 0:
        raise ConfigError(f"{key} must be positive, got {value}")


def _nonneg(key, value):
    if value < 0:
        raise ConfigError(f"{key} must be nonnegative, got {value}")


def _choice(options):
    def check(key, value):
        if value not in options:
            raise ConfigError(f"{key} must be one of {options}, got {value!r}")

    return check


def _int_list(key, value):
    if not value or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
        raise ConfigError(f"{key} must be a nonempty list of integers")


@dataclass
class RunConfig:
    """Typed view of one experiment configuration."""

    methods: list[str] = field(default_factory=lambda: ["cl_qas"])
    dataset: str = "financial"
    seeds: list[int] = field(default_factory=lambda: [1])
    out: str = "results"

    data_seed: int = 7
    data_n_steps: int = 6000
    data_n_regimes: int = 6
    data_n_tasks: int = 8
    data_max_samples_per_task: int = 0
    data_ecg_path: str = ""
    data_ecg_records: list[str] = field(default_factory=list)

    circuit_qubits: int = 8
    circuit_layers: int = 4
    circuit_max_layers: int = 4

    encoder_input_modes: list[int] = field(default_factory=lambda: [4, 16, 4])
    encoder_output_modes: list[int] = field(default_factory=lambda: [2, 2, 2])
    encoder_ranks: list[int] = field(default_factory=lambda: [1, 2, 3, 1])

    train_lr: float = 3e-3
    train_batch: int = 128
    train_epochs: int = 100
    train_shots: int = 0
    train_theta_reinit: bool = False

    noise_p1: float = 0.0
    noise_p2: float = 0.0
    noise_pr: float = 0.0
    noise_jitter: float = 0.0
    noise_convention: str = "standard"

    qas_candidates_per_round: int = 8
    qas_rounds: int = 4
    qas_kappa: float = 0.005
    qas_mu: float = 0.1
    qas_beta: float = 0.01
    qas_policy_lr: float = 0.05
    qas_fisher_samples: int = 64
    qas_baseline: str = "none"

    ewc_lambda: float = 1.0
    objective_lambda: float = 1.0

    def __post_init__(self):
        for key, value in self.resolved().items():
            spec = SCHEMA[key]
            if spec.check is not None:
                spec.check(key, value)
        if self.circuit_qubits < 3:
            raise ConfigError("circuit.qubits must be at least 3 (softmax head needs K < U)")
        if self.circuit_layers > self.circuit_max_layers:
            raise ConfigError("circuit.layers cannot exceed circuit.max_layers")
        if len(self.encoder_ranks) != len(self.encoder_input_modes) + 1:
            raise ConfigError("encoder.ranks needs one more entry than encoder.input_modes")
        if len(self.encoder_input_modes) != len(self.encoder_output_modes):
            raise ConfigError("encoder input and output mode lists must have equal length")
        out_dim = 1
        for n in self.encoder_output_modes:
            out_dim *= n
        if out_dim != self.circuit_qubits:
            raise ConfigError(
                f"product of encoder.output_modes ({out_dim}) must equal circuit.qubits "
                f"({self.circuit_qubits})"
            )
        if self.dataset == "ecg":
            if not self.data_ecg_path:
                raise ConfigError("dataset 'ecg' requires data.ecg_path")
            if not Path(self.data_ecg_path).exists():
                raise ConfigError(f"data.ecg_path does not exist: {self.data_ecg_path}")

    def resolved(self) -> dict:
        """Flat dotted-key dict of every configuration value."""
        return {_key_for(f.name): getattr(self, f.name) for f in fields(self)}

    def config_hash(self) -> str:
        """Hash over all result-shaping keys (method/seeds/out excluded)."""
        scope = {k: v for k, v in self.resolved().items() if k not in ("methods", "seeds", "out")}
        blob = json.dumps(scope, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @classmethod
    def from_flat(cls, flat: dict) -> "RunConfig":
        by_key = {_key_for(f.name): f.name for f in fields(cls)}
        unknown = sorted(set(flat) - set(by_key))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        kwargs = {}
        for key, value in flat.items():
            spec = SCHEMA[key]
            value = _coerce(key, value, spec.type)
            kwargs[by_key[key]] = value
        return cls(**kwargs)


def _key_for(field_name: str) -> str:
    """Dataclass field name to dotted config key (first underscore groups)."""
    return field_name.replace("_", ".", 1)


@dataclass(frozen=True)
class _KeySpec:
    key: str
    type: type
    check: object = None


SCHEMA = {
    spec.key: spec
    for spec in [
        _KeySpec("methods", list, lambda k, v: [_choice(METHODS)(k, m) for m in v]),
        _KeySpec("dataset", str, _choice(DATASETS)),
        _KeySpec("seeds", list, _int_list),
        _KeySpec("out", str),
        _KeySpec("data.seed", int),
        _KeySpec("data.n_steps", int, _positive),
        _KeySpec("data.n_regimes", int, _positive),
        _KeySpec("data.n_tasks", int, _positive),
        _KeySpec("data.max_samples_per_task", int, _nonneg),
        _KeySpec("data.ecg_path", str),
        _KeySpec("data.ecg_records", list),
        _KeySpec("circuit.qubits", int, _positive),
        _KeySpec("circuit.layers", int, _positive),
        _KeySpec("circuit.max_layers", int, _positive),
        _KeySpec("encoder.input_modes", list),
        _KeySpec("encoder.output_modes", list),
        _KeySpec("encoder.ranks", list),
        _KeySpec("train.lr", float, _positive),
        _KeySpec("train.batch", int, _positive),
        _KeySpec("train.epochs", int, _positive),
        _KeySpec("train.shots", int, _nonneg),
        _KeySpec("train.theta_reinit", bool),
        _KeySpec("noise.p1", float, _probability()),
        _KeySpec("noise.p2", float, _probability()),
        _KeySpec("noise.pr", float, _probability(0.0, 0.499)),
        _KeySpec("noise.jitter", float, _nonneg),
        _KeySpec("noise.convention", str, _choice(("standard", "linear"))),
        _KeySpec("qas.candidates_per_round", int, _positive),
        _KeySpec("qas.rounds", int, _positive),
        _KeySpec("qas.kappa", float, _nonneg),
        _KeySpec("qas.mu", float, _nonneg),
        _KeySpec("qas.beta", float, _nonneg),
        _KeySpec("qas.policy_lr", float, _positive),
        _KeySpec("qas.fisher_samples", int, _positive),
        _KeySpec("qas.baseline", str, _choice(("none", "running_mean"))),
        _KeySpec("ewc.lambda", float, _nonneg),
        _KeySpec("objective.lambda", float, _nonneg),
    ]
}


def _coerce(key, value, target):
    if target is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if target is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be a boolean, got {value!r}")
        return value
    if target is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise ConfigError(f"{key} must be an integer, got {value!r}")
    if not isinstance(value, target):
        raise ConfigError(f"{key} must be {target.__name__}, got {type(value).__name__}")
    return value


def flatten(tree: dict, prefix: str = "") -> dict:
    """Collapse nested TOML tables into dotted keys."""
    flat = {}
    for key, value in tree.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(flatten(value, prefix=f"{name}."))
        else:
            flat[name] = value
    return flat


def load_config(path, overrides: dict | None = None) -> RunConfig:
    """Parse a TOML config file, apply CLI overrides, and validate."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        tree = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    flat = flatten(tree)
    if overrides:
        flat.update(overrides)
    return RunConfig.from_flat(flat)
