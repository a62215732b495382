"""Run configuration: one JSON file, flag overrides, env only for credentials."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from .engine import RuleConfig
from .errors import ConfigError
from .evaluate import NumericTolerance
from .rhythm import ScreenConfig


@dataclass
class RunConfig:
    data_dir: str | None = None
    out_dir: str | None = None
    guideline_path: str | None = None
    screen: ScreenConfig = field(default_factory=ScreenConfig)
    rules: RuleConfig = field(default_factory=RuleConfig)
    qa_tolerance: NumericTolerance = field(default_factory=NumericTolerance)
    backend: str = "offline"  # offline | endpoint
    judge: bool = False
    fair: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.backend not in ("offline", "endpoint"):
            raise ConfigError(f"unknown backend {self.backend!r}")

    def to_dict(self) -> dict:
        return {
            "data_dir": self.data_dir,
            "out_dir": self.out_dir,
            "guideline_path": self.guideline_path,
            "screen": self.screen.to_dict(),
            "rules": self.rules.to_dict(),
            "qa_tolerance": {
                "abs_tol": self.qa_tolerance.abs_tol,
                "rel_tol": self.qa_tolerance.rel_tol,
            },
            "backend": self.backend,
            "judge": self.judge,
            "fair": self.fair,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        kwargs = dict(d)
        if "screen" in kwargs:
            kwargs["screen"] = ScreenConfig.from_dict(kwargs["screen"])
        if "rules" in kwargs:
            kwargs["rules"] = RuleConfig.from_dict(kwargs["rules"])
        if "qa_tolerance" in kwargs:
            kwargs["qa_tolerance"] = NumericTolerance(**kwargs["qa_tolerance"])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(f"bad run config: {exc}") from exc

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))
