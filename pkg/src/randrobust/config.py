"""Run configuration: one strict JSON file plus command-line overrides."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import ConfigurationError

OUTPUT_DIR_ENV = "RANDROBUST_OUTPUT_DIR"


class JointQuery(BaseModel):
    model_config = ConfigDict(extra="forbid")

    N: int = Field(ge=1)
    i: list[int] = Field(min_length=1)
    t: list[float] = Field(min_length=1)


class RunConfig(BaseModel):
    """Every key a config file may contain. Unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid")

    command: Literal["plan", "analyze", "verify", "dist"]
    epsilon: float = Field(default=0.05, gt=0.0, lt=1.0)
    delta: float = Field(default=0.05, gt=0.0, lt=1.0)
    mode: Literal["indirect", "direct"] = "indirect"
    target: Literal["min", "max", "range"] = "min"
    problem: Optional[Union[str, dict[str, Any]]] = None
    rho: Optional[float] = Field(default=None, gt=0.0, le=1.0)
    estimate_rho: Optional[int] = Field(default=None, ge=100)
    seed: Optional[int] = Field(default=None, ge=0, lt=2**64)
    draw_cap: Optional[int] = Field(default=None, ge=1)
    trials: int = Field(default=2000, ge=100)
    self_test: bool = False
    output: Optional[str] = None
    format: Literal["jsonl", "csv"] = "jsonl"
    # dist queries
    v: Optional[tuple[int, int, float]] = None
    mu: Optional[tuple[int, float]] = None
    joint: Optional[JointQuery] = None
    constrained: Optional[JointQuery] = None
    tau: Optional[float] = Field(default=None, gt=0.0, lt=1.0)
    test_distribution: Optional[Union[str, dict[str, Any]]] = None
    term_budget: int = Field(default=10**7, ge=1)

    @model_validator(mode="after")
    def _cross_checks(self):
        if self.command == "analyze":
            if self.problem is None:
                raise ValueError("analyze needs a problem (model file path, 'bundled:<name>' or inline model)")
            if self.mode == "direct" and self.rho is None and self.estimate_rho is None:
                raise ValueError("direct mode needs rho or an estimate_rho probe size")
        if self.command == "dist":
            if not any(x is not None for x in (self.v, self.mu, self.joint, self.constrained, self.tau)):
                raise ValueError("dist needs at least one of v, mu, joint, constrained, tau")
            if (self.constrained is not None or self.tau is not None) and self.test_distribution is None:
                raise ValueError("constrained and tau queries need a test_distribution")
        return self


def load_config_file(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError("config file must contain a JSON object")
    return data
