"""Run configuration: every tunable constant, one flat key=value file.

The file format is deliberately dumb: `key = value` lines, `#`
comments, blank lines ignored. Values round-trip losslessly (floats are
written with repr), so save(load(f)) reproduces f up to comments and
ordering. Unknown keys are errors, not warnings; a typo should fail the
run, not silently fall back to a default.
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .exceptions import ConfigError
from .fusion import FusionConfig
from .priors import PriorConfig
from .prompting import EvolutionConfig

__all__ = ["RunConfig"]


@dataclass(frozen=True)
class RunConfig:
    """Defaults follow the reference setup: value embeddings, two rounds
    of self-correlation refinement, prior threshold 0.5, tight/loose
    prompt thresholds 0.7/0.5, confidence bar 0.85, five-round budget,
    and support rescale factors 1.5x/0.5x."""

    embedding_kind: str = "value"
    rho: int = 2
    sinkhorn_iters: int = 50
    tau: float = 0.5
    scale_xl: float = 1.5
    scale_xs: float = 0.5
    theta_tight: float = 0.7
    theta_loose: float = 0.5
    score_thresh: float = 0.85
    neg_area_thresh: int | None = None
    max_rounds: int = 5
    prompt_center: str = "edt"
    encoder_dim: int = 32
    encoder_noise_sigma: float = 0.1
    workers: int = 4

    def __post_init__(self) -> None:
        # Sub-config constructors own the detailed validation.
        self.prior_config()
        self.fusion_config()
        self.evolution_config()
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if not (self.scale_xl > 1.0 > self.scale_xs > 0.0):
            raise ConfigError(
                f"need scale_xl > 1 > scale_xs > 0, got {self.scale_xl}, {self.scale_xs}"
            )

    def prior_config(self) -> PriorConfig:
        try:
            return PriorConfig(
                rho=self.rho,
                sinkhorn_iters=self.sinkhorn_iters,
                embedding_kind=self.embedding_kind,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def fusion_config(self) -> FusionConfig:
        try:
            return FusionConfig(tau=self.tau)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def evolution_config(self) -> EvolutionConfig:
        try:
            return EvolutionConfig(
                theta_tight=self.theta_tight,
                theta_loose=self.theta_loose,
                score_thresh=self.score_thresh,
                neg_area_thresh=self.neg_area_thresh,
                max_rounds=self.max_rounds,
                prompt_center=self.prompt_center,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                rendered = "auto"
            elif isinstance(value, float):
                rendered = repr(value)
            else:
                rendered = str(value)
            lines.append(f"{f.name} = {rendered}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        spec = {f.name: f for f in fields(cls)}
        seen: dict[str, object] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, _, value = (tok.strip() for tok in line.partition("="))
            if key not in spec:
                raise ConfigError(f"line {lineno}: unknown config key {key!r}")
            if key in seen:
                raise ConfigError(f"line {lineno}: duplicate config key {key!r}")
            seen[key] = _parse_value(key, value, lineno)
        try:
            return cls(**seen)  # type: ignore[arg-type]
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        return cls.from_text(path.read_text())


_INT_KEYS = {"rho", "sinkhorn_iters", "max_rounds", "encoder_dim", "workers"}
_FLOAT_KEYS = {
    "tau", "scale_xl", "scale_xs", "theta_tight", "theta_loose",
    "score_thresh", "encoder_noise_sigma",
}
_STR_KEYS = {"embedding_kind", "prompt_center"}


def _parse_value(key: str, value: str, lineno: int) -> object:
    try:
        if key == "neg_area_thresh":
            return None if value == "auto" else int(value)
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
        if key in _STR_KEYS:
            return value
    except ValueError as exc:
        raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from exc
    raise ConfigError(f"line {lineno}: unhandled config key {key!r}")
