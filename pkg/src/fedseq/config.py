"""Experiment configuration: a flat ``key = value`` text file.

Blank lines and ``#`` comments are ignored; unknown keys are an error.
``FEDSEQ_SEED`` in the environment overrides ``seed``. See
``ExperimentConfig`` for the keys and their defaults.
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, fields
from pathlib import Path

from .nets import CellKind, NetworkConfig, canonical_variant


class ConfigError(ValueError):
    pass


MODES = {"central": "central", "central_au": "central",
         "federated": "federated", "fl": "federated"}

# Admissible values explored for the AU and federated models.
ADMISSIBLE_GRID = {
    "learning_rate": (1e-3, 1e-4, 1e-5),
    "hidden_size": (8, 16, 64, 128, 256, 512),
    "sequence_length": (50, 100, 200, 400, 600, 800, 1000, 2000),
    "num_layers": (1, 2, 4, 6, 8),
}
IMAGE_SEQUENCE_LENGTHS = (4, 8, 16, 32)

# Published optima: (mode, cell, learning rate, sequence length, hidden size, layers).
PUBLISHED_OPTIMA = (
    ("central", "GRU", 1e-4, 600, 512, 6),
    ("central", "LSTM", 1e-4, 600, 128, 6),
    ("central", "SimpleRNN", 1e-4, 2000, 128, 2),
    ("federated", "GRU", 1e-4, 8, 128, 6),
    ("federated", "LSTM", 1e-4, 8, 128, 6),
    ("federated", "SimpleRNN", 1e-4, 8, 128, 6),
)


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "central"
    cell: str = "GRU"
    bidirectional: bool = True
    input_size: int = 40
    hidden_size: int = 64
    num_layers: int = 1
    fc_hidden: int = 10
    sequence_length: int = 600
    stride: int = 0                     # 0: same as sequence_length
    learning_rate: float = 1e-4
    epochs: int = 100
    epochs_per_round: int = 1
    k_folds: int = 8
    seed: int = 0
    aggregation: str = "mean"
    client_optimizer: str = "persistent"
    clip_norm: float = 5.0
    normalization: str = "train"        # train | participant
    ccc_mode: str = "pooled"            # pooled | per_participant
    threaded: bool = False
    workers: int = 1
    timeout: float = 0.0                # seconds; 0 waits forever
    data_dir: str = ""
    synthetic_participants: int = 0
    synthetic_frames: int = 0
    synthetic_seed: int = 0
    participants: str = ""              # comma-separated ids (tcp server)
    listen: str = "127.0.0.1:7777"
    output: str = ""
    save_model: str = ""

    def __post_init__(self):
        try:
            object.__setattr__(self, "mode", MODES[self.mode.lower()])
        except KeyError:
            raise ConfigError(f"mode must be one of {sorted(set(MODES.values()))}") from None
        try:
            object.__setattr__(self, "cell", canonical_variant(self.cell))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        checks = [
            (self.aggregation in ("mean", "weighted_mean"), "aggregation must be mean or weighted_mean"),
            (self.client_optimizer in ("persistent", "reset"), "client_optimizer must be persistent or reset"),
            (self.normalization in ("train", "participant"), "normalization must be train or participant"),
            (self.ccc_mode in ("pooled", "per_participant"), "ccc_mode must be pooled or per_participant"),
            (self.k_folds >= 1, "k_folds must be >= 1"),
            (self.epochs >= 0, "epochs must be >= 0"),
            (self.epochs_per_round >= 1, "epochs_per_round must be >= 1"),
            (self.epochs % self.epochs_per_round == 0, "epochs must be a multiple of epochs_per_round"),
            (self.stride >= 0, "stride must be >= 0"),
            (self.workers >= 1, "workers must be >= 1"),
            (self.timeout >= 0, "timeout must be >= 0"),
            (0 <= self.seed < 2**64, "seed must be an unsigned 64-bit integer"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        try:
            self.network()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def network(self, input_size: int | None = None) -> NetworkConfig:
        return NetworkConfig(
            cell=CellKind(self.cell, self.bidirectional),
            input_size=self.input_size if input_size is None else input_size,
            hidden_size=self.hidden_size, num_layers=self.num_layers,
            fc_hidden=self.fc_hidden, outputs=2,
            sequence_length=self.sequence_length, learning_rate=self.learning_rate)

    @property
    def effective_stride(self) -> int:
        return self.stride or self.sequence_length

    @property
    def participant_list(self) -> list[str]:
        return [p.strip() for p in self.participants.split(",") if p.strip()]

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "ExperimentConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = set(values) - set(known)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**{k: _coerce(known[k], v) for k, v in values.items()})

    def to_text(self) -> str:
        return "".join(f"{k} = {_format(v)}\n" for k, v in self.as_dict().items())


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _coerce(field, value):
    if not isinstance(value, str):
        return value
    kind = field.type if isinstance(field.type, str) else field.type.__name__
    text = value.strip()
    try:
        if kind == "bool":
            lowered = text.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind == "int":
            return int(text, 0)
        if kind == "float":
            return float(text)
    except ValueError:
        raise ConfigError(f"{field.name}: cannot parse {value!r} as {kind}") from None
    return text


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected key = value")
        key = key.strip()
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value.strip()
    return values


def load_config(path=None, overrides: dict | None = None, env=None) -> ExperimentConfig:
    values = parse_config_text(Path(path).read_text()) if path else {}
    values.update(overrides or {})
    env = os.environ if env is None else env
    if env.get("FEDSEQ_SEED"):
        values["seed"] = env["FEDSEQ_SEED"]
    return ExperimentConfig.from_dict(values)


def grid_violations(cfg: ExperimentConfig) -> list[str]:
    """Reasons ``cfg`` falls outside the admissible hyper-parameter grid."""
    problems = []
    for key, allowed in ADMISSIBLE_GRID.items():
        value = getattr(cfg, key)
        if key == "sequence_length" and value in IMAGE_SEQUENCE_LENGTHS:
            if cfg.mode == "central":
                problems.append(f"sequence_length={value} is an image-branch value, "
                                "not applicable to action-unit models")
            continue
        if value not in allowed:
            problems.append(f"{key}={value} not in {allowed}")
    if cfg.fc_hidden != 10:
        problems.append("fc_hidden must be 10")
    if cfg.k_folds != 8:
        problems.append("k_folds must be 8")
    if cfg.epochs != 100:
        problems.append("epochs must be 100")
    if cfg.cell != "SimpleRNN" and not cfg.bidirectional:
        problems.append(f"{cfg.cell} models are bidirectional")
    return problems
