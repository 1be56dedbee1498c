"""Run configuration: a flat key-value text file.

Lines are ``key = value``; ``#`` starts a comment. Unknown keys are
rejected and every range constraint is enforced at load time.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .breadth import DEFAULT_RELATION_CONFIDENCE, SUPPORTS_SCALE
from .fusion import HyperParams
from .theorem import SyntheticScenario


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # fusion hyperparameters
    lambda_off: float = 1.0
    lambda_ord: float = 1.0
    tau: float = 0.5
    gamma: float = 1.0
    beta: float = 0.0
    delta: float = 0.05
    l_breadth: int = 5
    l_depth: int = 6
    k: int = 8
    beam: int = 64
    epsilon_floor: float = 1e-12
    # embedder selection
    embedder: str = "reference"
    embedder_endpoint: str = ""
    embedder_dim: int = 256
    # graph construction
    mode: str = "signal"
    confidence_mentions: float = DEFAULT_RELATION_CONFIDENCE["mentions"]
    confidence_defines: float = DEFAULT_RELATION_CONFIDENCE["defines"]
    confidence_aliases: float = DEFAULT_RELATION_CONFIDENCE["aliases"]
    confidence_cites: float = DEFAULT_RELATION_CONFIDENCE["cites"]
    confidence_derived_from: float = DEFAULT_RELATION_CONFIDENCE["derived_from"]
    supports_scale: float = SUPPORTS_SCALE
    # paths
    trace_dir: str = ""
    graph_dir: str = ""
    out_dir: str = "out"
    # randomness and theorem scenarios
    rng_seed: int = 0
    scenario_answer_count: int = 4
    scenario_sharpness_breadth: float = 2.0
    scenario_sharpness_depth: float = 2.0
    scenario_calibrated: bool = True
    scenario_trials: int = 10_000

    def __post_init__(self) -> None:
        self.hyperparams()  # range checks live in HyperParams
        if self.embedder not in ("reference", "remote"):
            raise ConfigError(f"embedder must be reference or remote, got {self.embedder!r}")
        if self.embedder == "remote" and not self.embedder_endpoint:
            raise ConfigError("remote embedder requires embedder_endpoint")
        if self.embedder_dim < 1:
            raise ConfigError("embedder_dim must be positive")
        if self.mode not in ("signal", "subject"):
            raise ConfigError(f"mode must be signal or subject, got {self.mode!r}")
        for name in (
            "confidence_mentions",
            "confidence_defines",
            "confidence_aliases",
            "confidence_cites",
            "confidence_derived_from",
        ):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ConfigError(f"{name} must lie in (0, 1]")
        if not 0.0 < self.supports_scale <= 1.0:
            raise ConfigError("supports_scale must lie in (0, 1]")

    def hyperparams(self) -> HyperParams:
        try:
            return HyperParams(
                lambda_off=self.lambda_off,
                lambda_ord=self.lambda_ord,
                tau=self.tau,
                gamma=self.gamma,
                beta=self.beta,
                delta=self.delta,
                l_breadth=self.l_breadth,
                l_depth=self.l_depth,
                k=self.k,
                beam=self.beam,
                epsilon_floor=self.epsilon_floor,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def relation_confidence(self) -> dict[str, float]:
        return {
            "mentions": self.confidence_mentions,
            "defines": self.confidence_defines,
            "aliases": self.confidence_aliases,
            "cites": self.confidence_cites,
            "derived_from": self.confidence_derived_from,
        }

    def scenario(self) -> SyntheticScenario:
        try:
            return SyntheticScenario(
                answer_count=self.scenario_answer_count,
                sharpness_breadth=self.scenario_sharpness_breadth,
                sharpness_depth=self.scenario_sharpness_depth,
                calibrated=self.scenario_calibrated,
                trials=self.scenario_trials,
                rng_seed=self.rng_seed,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str) -> object:
    declared = _FIELD_TYPES[key]
    if declared == "bool":
        if raw.lower() in ("true", "yes", "1"):
            return True
        if raw.lower() in ("false", "no", "0"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if declared == "int":
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None
    if declared == "float":
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
    return raw


def parse_config(text: str) -> RunConfig:
    values: dict[str, object] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        key, sep, raw = stripped.partition("=")
        if not sep:
            raise ConfigError(f"line {line_no}: expected 'key = value'")
        key = key.strip()
        raw = raw.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {line_no}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {line_no}: duplicate key {key!r}")
        values[key] = _coerce(key, raw)
    return RunConfig(**values)  # type: ignore[arg-type]


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    return parse_config(Path(path).read_text("utf-8"))
