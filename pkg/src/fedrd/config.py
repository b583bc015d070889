"""Experiment configuration files (YAML).

Layout::

    data:
      generator: {n_transactions: 20000, n_banks: 4, ...}   # or
      transactions: path/to/transactions.csv
      accounts: path/to/accounts.csv
      test_fraction: 0.2
      stratify: true
    train: {approach: summation, epochs: 10, embedding_size: 64, ...}
    sweep:
      approaches: [concatenation, summation]
      betas: [0.10, 0.15, 0.25]
      seeds: [0]
      target_auprc: 0.7
    budget: {alphas: [1.5, 2.0], c: 1.0}
    output: out

Relative data paths resolve against the config file's directory.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .data import GenConfig
from .exceptions import ConfigError, FedRDError
from .training import APPROACHES, TrainConfig

_SECTIONS = {"data", "train", "sweep", "budget", "output"}
_DATA_KEYS = {"generator", "transactions", "accounts", "test_fraction", "stratify"}
_SWEEP_KEYS = {"approaches", "betas", "seeds", "target_auprc"}
_BUDGET_KEYS = {"alphas", "c"}


@dataclass
class ExperimentConfig:
    train: TrainConfig
    generator: GenConfig | None = None
    transactions: Path | None = None
    accounts: Path | None = None
    test_fraction: float = 0.2
    stratify: bool = True
    approaches: list[str] = field(default_factory=lambda: ["summation"])
    betas: list[float] = field(default_factory=lambda: [0.25])
    seeds: list[int] = field(default_factory=lambda: [0])
    target_auprc: float = 0.7
    alphas: list[float] = field(default_factory=lambda: [2.0])
    c: float = 1.0
    output: Path | None = None

    def to_dict(self) -> dict:
        data: dict = {"test_fraction": self.test_fraction, "stratify": self.stratify}
        if self.generator is not None:
            data["generator"] = dataclasses.asdict(self.generator)
        else:
            data["transactions"] = str(self.transactions)
            data["accounts"] = str(self.accounts)
        train = dataclasses.asdict(self.train)
        train["hidden"] = list(self.train.hidden)
        train["alphas"] = list(self.train.alphas)
        out = {
            "data": data,
            "train": train,
            "sweep": {
                "approaches": list(self.approaches),
                "betas": list(self.betas),
                "seeds": list(self.seeds),
                "target_auprc": self.target_auprc,
            },
            "budget": {"alphas": list(self.alphas), "c": self.c},
        }
        if self.output is not None:
            out["output"] = str(self.output)
        return out

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)


def _check_keys(section: str, given: dict, allowed: set[str]) -> None:
    if not isinstance(given, dict):
        raise ConfigError(f"{section}: expected a mapping")
    unknown = sorted(set(given) - allowed)
    if unknown:
        raise ConfigError(f"{section}: unknown field(s) {', '.join(unknown)}")


def _build(cls, section: str, values: dict):
    names = {f.name for f in fields(cls) if not f.name.startswith("_")}
    _check_keys(section, values, names)
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}: {exc}") from None


def from_dict(raw: dict, base_dir: Path | None = None) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    _check_keys("config", raw, _SECTIONS)
    base_dir = base_dir or Path(".")
    data = raw.get("data", {}) or {}
    _check_keys("data", data, _DATA_KEYS)
    has_gen = "generator" in data
    has_paths = "transactions" in data or "accounts" in data
    if has_gen == has_paths:
        raise ConfigError("data: give exactly one of generator or transactions+accounts")

    cfg = ExperimentConfig(train=_build(TrainConfig, "train", raw.get("train", {}) or {}))
    try:
        cfg.train.validate()
    except ConfigError as exc:
        raise ConfigError(f"train: {exc}") from None

    if has_gen:
        cfg.generator = _build(GenConfig, "data.generator", data["generator"] or {})
        try:
            cfg.generator.validate()
        except FedRDError as exc:
            raise ConfigError(f"data.generator: {exc}") from None
    else:
        for key in ("transactions", "accounts"):
            if key not in data:
                raise ConfigError(f"data.{key}: required when no generator is given")
            p = Path(data[key])
            setattr(cfg, key, p if p.is_absolute() else base_dir / p)
    cfg.test_fraction = float(data.get("test_fraction", cfg.test_fraction))
    if not 0.0 < cfg.test_fraction < 1.0:
        raise ConfigError("data.test_fraction: must lie in (0, 1)")
    cfg.stratify = bool(data.get("stratify", cfg.stratify))

    sweep = raw.get("sweep", {}) or {}
    _check_keys("sweep", sweep, _SWEEP_KEYS)
    cfg.approaches = list(sweep.get("approaches", [cfg.train.approach]))
    cfg.betas = [float(b) for b in sweep.get("betas", [cfg.train.beta])]
    cfg.seeds = [int(s) for s in sweep.get("seeds", [cfg.train.seed])]
    cfg.target_auprc = float(sweep.get("target_auprc", cfg.target_auprc))
    for name in ("approaches", "betas", "seeds"):
        if not getattr(cfg, name):
            raise ConfigError(f"sweep.{name}: must be non-empty")
    for a in cfg.approaches:
        if a not in APPROACHES:
            raise ConfigError(f"sweep.approaches: unknown approach {a!r}")
    for b in cfg.betas:
        if not 0.0 < b <= 0.25:
            raise ConfigError(f"sweep.betas: {b} outside (0, 1/4]")
    if any(s < 0 for s in cfg.seeds):
        raise ConfigError("sweep.seeds: seeds must be non-negative")

    budget = raw.get("budget", {}) or {}
    _check_keys("budget", budget, _BUDGET_KEYS)
    cfg.alphas = [float(a) for a in budget.get("alphas", list(cfg.train.alphas))]
    cfg.c = float(budget.get("c", cfg.train.pbm_constant))
    if any(not 1.0 < a <= 2.0 for a in cfg.alphas):
        raise ConfigError("budget.alphas: every alpha must lie in (1, 2]")
    if not cfg.c > 0:
        raise ConfigError("budget.c: must be positive")
    if raw.get("output") is not None:
        cfg.output = Path(raw["output"])
    return cfg


def load(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
    return from_dict(raw or {}, base_dir=path.parent)
