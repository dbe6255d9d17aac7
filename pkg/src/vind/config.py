"""Run configuration: TOML text <-> validated :class:`RunConfig`.

A config is a TOML document. Top-level keys: ``experiment``, ``seed``,
``output_dir``. Tables: ``[data]``, ``[prior]``, ``[fit]``, ``[sweep]``,
``[probe]``, and the per-block tables ``[init]``, ``[estimator]``,
``[epsilon]``, ``[lr]`` whose keys are quoted block names such as
``"tau.alpha"``. Unknown keys are rejected. See the README for the full
grammar and defaults.
"""

import sys
from pathlib import Path
from typing import Annotated, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

from .errors import ConfigError

__all__ = [
    "RunConfig",
    "SynthSpec",
    "parse_config",
    "parse_synth_spec",
    "load_config",
    "emit_config",
    "EXPERIMENTS",
    "ESTIMATOR_CHOICES",
]

EXPERIMENTS = ("gamma-normal-mse", "linreg-fit", "student-wishart-fit", "variance-probe")
ESTIMATOR_CHOICES = ("bbvi", "bbvi_rb", "reparam", "vind", "vind_uncoupled", "naive_fd", "frozen")
ARMS = ("vind", "vind_uncoupled", "naive_fd", "bbvi", "bbvi_rb", "bbvi_rb-frozen-p")

Value = Union[float, List[float], List[List[float]]]
Positive = Annotated[float, Field(gt=0)]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DataConfig(_Section):
    source: Literal["synthetic", "csv"] = "synthetic"
    path: Optional[str] = None
    target_column: Optional[str] = None
    n: Optional[int] = Field(None, ge=1)
    n_train: Optional[int] = Field(None, ge=1)
    d: Optional[int] = Field(None, ge=1)
    tau_true: float = Field(1.0, gt=0)
    nu_true: float = Field(5.0, gt=0)
    mu: float = 0.0

    @model_validator(mode="after")
    def _path_required(self):
        if self.source == "csv":
            if not self.path:
                raise ValueError("data.path is required when data.source = 'csv'")
            if not Path(self.path).is_file():
                raise ValueError(f"data.path {self.path!r} does not exist")
        return self


class PriorConfig(_Section):
    alpha0: Optional[float] = Field(None, gt=0)
    beta0: Optional[float] = Field(None, gt=0)
    s0: Optional[float] = Field(None, gt=0)
    mu_scale: Optional[float] = Field(None, gt=0)
    p0: Optional[float] = Field(None, gt=0)
    a0: Optional[float] = Field(None, gt=0)
    b0: Optional[float] = Field(None, gt=0)


class FitSection(_Section):
    arm: Literal[ARMS] = "vind"
    iterations: Optional[int] = Field(None, ge=0)
    n_samples: int = Field(3, ge=1)
    n_elbo: int = Field(20, ge=1)
    smooth_window: int = Field(100, ge=1)
    n_predictive: int = Field(1000, ge=1)


class SweepConfig(_Section):
    epsilons: List[float] = Field(default_factory=lambda: [0.1, 1.0, 10.0, 100.0])
    iterations: int = Field(200, ge=1)
    n_reps: int = Field(1000, ge=100)
    n_per_estimate: int = Field(2, ge=1)
    lr: float = Field(0.25, gt=0)

    @field_validator("epsilons")
    @classmethod
    def _positive(cls, v):
        for i, e in enumerate(v):
            if not e > 0:
                raise ValueError(f"epsilons[{i}] = {e} must be > 0")
        return v


class ProbeConfig(_Section):
    model: Literal["student-wishart", "linreg"] = "student-wishart"
    every: int = Field(100, ge=1)
    n_probe: int = Field(1000, ge=2)
    estimators: List[Literal["vind", "vind_uncoupled", "bbvi", "bbvi_rb", "naive_fd"]] = Field(
        default_factory=lambda: ["vind", "vind_uncoupled", "bbvi_rb"]
    )


class RunConfig(_Section):
    experiment: Literal[EXPERIMENTS] = "gamma-normal-mse"
    seed: int = Field(0, ge=0, lt=2**64)
    output_dir: str = "out"
    data: DataConfig = Field(default_factory=DataConfig)
    prior: PriorConfig = Field(default_factory=PriorConfig)
    fit: FitSection = Field(default_factory=FitSection)
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    probe: ProbeConfig = Field(default_factory=ProbeConfig)
    init: Dict[str, Value] = Field(default_factory=dict)
    estimator: Dict[str, Literal[ESTIMATOR_CHOICES]] = Field(default_factory=dict)
    epsilon: Dict[str, Positive] = Field(default_factory=dict)
    lr: Dict[str, Positive] = Field(default_factory=dict)


def _key_path(loc):
    return ".".join(str(p) for p in loc if not str(p).startswith("function-"))


def parse_config(text):
    """Parse and validate TOML text. Raises :class:`ConfigError`."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"parse error: {exc}") from exc
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        msgs = []
        for err in exc.errors():
            path = _key_path(err["loc"]) or "<root>"
            msg = err["msg"].removeprefix("Value error, ")
            msgs.append(f"{path}: {msg}")
        raise ConfigError("invalid config: " + "; ".join(msgs)) from exc


def load_config(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def emit_config(config):
    """Serialize a config back to TOML; ``parse_config`` of the result gives an equal config."""
    return tomli_w.dumps(config.model_dump(mode="json", exclude_none=True))


class SynthSpec(_Section):
    """Spec for ``vind synth``: which synthetic dataset to write and where."""

    kind: Literal["student", "linreg", "gamma-normal"] = "student"
    n: int = Field(160, ge=1)
    d: int = Field(5, ge=1)
    nu: float = Field(5.0, gt=0)
    tau_true: float = Field(1.0, gt=0)
    seed: int = Field(0, ge=0, lt=2**64)
    output: str = "synthetic.csv"


def parse_synth_spec(text):
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"parse error: {exc}") from exc
    try:
        return SynthSpec.model_validate(raw)
    except ValidationError as exc:
        msgs = [f"{_key_path(e['loc']) or '<root>'}: {e['msg']}" for e in exc.errors()]
        raise ConfigError("invalid synth spec: " + "; ".join(msgs)) from exc
