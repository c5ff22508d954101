"""Plain-text ``key = value`` run configuration."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .graph import SyntheticConfig
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _parse_strings(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.split(",") if v.strip())


@dataclass
class RunConfig:
    # data
    nodes: str = ""
    relations: tuple[str, ...] = ()
    relation_names: tuple[str, ...] = ()
    output_dir: str = "runs/default"
    train_fraction: float = 0.4
    split_seed: int = 0
    checkpoint: str = ""
    resume: str = ""
    # synthetic source
    synthetic: bool = False
    num_nodes: int = 2000
    fraud_fraction: float = 0.15
    feature_dim: int = 16
    homophily: tuple[float, ...] = (0.9, 0.3, 0.05)
    mean_degree: tuple[float, ...] = (10.0, 10.0, 10.0)
    feature_overlap: float = 0.5
    informative_features: int = 4
    class_separation: float = 4.0
    graph_seed: int = 0
    # training
    num_layers: int = 1
    epochs: int = 30
    batch_size: int = 1024
    embedding_dim: int = 64
    learning_rate: float = 0.01
    lambda_1: float = 2.0
    lambda_2: float = 0.001
    tau: float = 0.02
    undersample_ratio: float = 1.0
    aggregator: str = "threshold"
    seed: int = 0
    eval_every: int = 3
    neighbor_mode: str = "adaptive"
    rl_terminate: bool = True
    # mode flags
    ci: bool = False
    json: bool = False

    explicit: set[str] = field(default_factory=set, repr=False, compare=False)

    def train_config(self) -> TrainConfig:
        names = {f.name for f in fields(TrainConfig)}
        return TrainConfig(**{k: getattr(self, k) for k in names})

    def synthetic_config(self) -> SyntheticConfig:
        return SyntheticConfig(
            num_nodes=self.num_nodes, fraud_fraction=self.fraud_fraction, feature_dim=self.feature_dim,
            homophily=self.homophily, mean_degree=self.mean_degree, feature_overlap=self.feature_overlap,
            seed=self.graph_seed, informative_features=self.informative_features,
            class_separation=self.class_separation, relation_names=self.relation_names or None)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            if f.name == "explicit":
                continue
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


_PARSERS = {
    "str": str, "int": int, "float": float, "bool": _parse_bool,
    "tuple[str, ...]": _parse_strings, "tuple[float, ...]": _parse_floats,
}
PATH_KEYS = {"nodes", "relations", "output_dir", "checkpoint", "resume"}


def config_keys() -> list[str]:
    return [f.name for f in fields(RunConfig) if f.name != "explicit"]


def set_value(cfg: RunConfig, key: str, text: str, base_dir: Path | None = None) -> None:
    """Parse ``text`` for ``key`` and store it; relative paths resolve against ``base_dir``."""
    types = {f.name: f.type for f in fields(RunConfig)}
    if key not in types or key == "explicit":
        raise ConfigError(f"unknown config key {key!r}")
    try:
        value = _PARSERS[types[key]](text.strip())
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from None
    if key in PATH_KEYS and base_dir is not None:
        def resolve(p: str) -> str:
            return p if not p or Path(p).is_absolute() else str(base_dir / p)
        value = tuple(resolve(p) for p in value) if isinstance(value, tuple) else resolve(value)
    setattr(cfg, key, value)
    cfg.explicit.add(key)


def read_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    cfg = RunConfig()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            try:
                set_value(cfg, key, value, path.parent)
            except ConfigError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from None
    return cfg


def validate(cfg: RunConfig, flag_keys=frozenset()) -> None:
    """Semantic checks; ``flag_keys`` names the keys given on the command line."""
    if cfg.ci and "seed" not in flag_keys:
        raise ConfigError("--seed is mandatory in CI mode")
    if not 0.0 < cfg.train_fraction < 1.0:
        raise ConfigError("train_fraction must lie in (0, 1)")
    try:
        cfg.train_config().validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
