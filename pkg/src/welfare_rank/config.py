"""Run configuration: a YAML document validated by pydantic models."""

from __future__ import annotations

from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import ConfigurationError, SchemaError
from .market.experiment import ExperimentDesign
from .market.population import MarketSpec, SignalNoise
from .scorers.bilinear import TrainingConfig
from .scorers.ranking import ConsiderationCutoffs
from .search import ModelParams
from .welfare import SplitSpec


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ModelSection(_Section):
    r: float = 0.05
    q: float = 0.15
    u_b: float = 0.0
    k: float = 0.5
    R: float = 0.5
    sigma: float = 1.0
    alpha0: float = 1.0
    alpha1: float = 1.0

    def build(self) -> ModelParams:
        return ModelParams(**self.model_dump())


class NoiseSection(_Section):
    u_rec: float = 0.5
    vadore0: float = 0.5
    vadore2: float = 0.5
    application: float = 0.5
    xgboost: float = 1.0


class MarketSection(_Section):
    n_seekers: int = Field(1000, ge=1)
    n_vacancies: int = Field(500, ge=1)
    pool_size: int = Field(200, ge=1)
    latent_dim: int = Field(4, ge=1)
    u_mean: float = 0.0
    u_scale: float = 1.0
    p_mean: float = -1.5
    p_scale: float = 1.0
    rho: float = Field(0.0, ge=-1, le=1)
    c_sd: float = Field(0.0, ge=0)
    click_offset: float | None = None
    enroll_prob: float = Field(1.0, ge=0, le=1)
    noise: NoiseSection = NoiseSection()


class CutoffSection(_Section):
    top: int = 25
    mid: int = 50
    wide: int = 100


class ExperimentSection(_Section):
    arms: list[str] = ["u_rec", "vadore0", "vadore2", "mix:vadore2:0.5", "application", "xgboost"]
    shares: list[float] | None = None
    strata: list[str] = ["occupation", "support", "location"]
    list_length: int = 10
    n_preselect: int = 15
    dropout: float = 0.0
    cutoffs: CutoffSection = CutoffSection()

    def build(self) -> ExperimentDesign:
        d = self.model_dump()
        d["arms"] = tuple(d["arms"])
        d["shares"] = None if d["shares"] is None else tuple(d["shares"])
        d["strata"] = tuple(d["strata"])
        d["cutoffs"] = ConsiderationCutoffs(**d["cutoffs"])
        return ExperimentDesign(**d)


class ScorerSection(_Section):
    """The learned bilinear scorer and the hazard calibration of its raw score."""

    enabled: bool = True
    hidden: bool = False
    margin: float = 1.0
    learning_rate: float = 0.05
    epochs: int = 30
    batch_size: int = 64
    negatives: int = 10
    init_scale: float = 0.01
    history_seekers: int | None = None
    max_apps: int = 20
    hazard_mode: Literal["none", "application", "two_sided"] = "application"
    max_rank: int = 10

    def training(self, seed: int) -> TrainingConfig:
        return TrainingConfig(self.margin, self.learning_rate, self.epochs, self.batch_size, self.negatives, seed,
                              self.init_scale)


class EstimationSection(_Section):
    bootstrap: int = Field(200, ge=0)
    constrained: bool = False
    max_group: int = 20


class WelfareSection(_Section):
    n_splits: int = Field(50, ge=1)
    fraction: float = Field(0.5, gt=0, lt=1)
    bootstrap: int = Field(1000, ge=0)
    slot_controls: bool = True
    k: int = Field(10, ge=1)
    sigma: Literal["unit", "estimated"] = "unit"

    def split_spec(self, seed: int) -> SplitSpec:
        return SplitSpec(self.n_splits, self.fraction, self.bootstrap, seed)


class FiguresSection(_Section):
    n_points: int = 200
    unit_variance: bool = False


class RunConfig(_Section):
    seed: int = 0
    threads: int = Field(1, ge=1)
    output_dir: str = "out"
    model: ModelSection = ModelSection()
    market: MarketSection = MarketSection()
    experiment: ExperimentSection = ExperimentSection()
    scorer: ScorerSection = ScorerSection()
    estimation: EstimationSection = EstimationSection()
    welfare: WelfareSection = WelfareSection()
    figures: FiguresSection = FiguresSection()

    def market_spec(self) -> MarketSpec:
        m = self.market.model_dump()
        m["noise"] = SignalNoise(**m["noise"])
        return MarketSpec(**m, params=self.model.build(), seed=self.seed)

    def with_overrides(self, seed: int | None = None, threads: int | None = None,
                       output_dir: str | None = None) -> "RunConfig":
        upd = {k: v for k, v in (("seed", seed), ("threads", threads), ("output_dir", output_dir)) if v is not None}
        return self.model_copy(update=upd) if upd else self

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.model_dump(mode="json"), sort_keys=False, default_flow_style=False)


def _describe(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(x) for x in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "; ".join(lines)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise SchemaError(f"{source}:{where} invalid YAML ({getattr(exc, 'problem', exc)})") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise SchemaError(f"{source}: top level must be a mapping")
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        raise SchemaError(f"{source}: {_describe(exc)}") from exc
    try:
        cfg.market_spec()
        cfg.experiment.build()
        cfg.scorer.training(cfg.seed)
    except (ConfigurationError, ValueError) as exc:
        raise SchemaError(f"{source}: {exc}") from exc
    return cfg


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file {path} not found")
    return parse_config(path.read_text(), str(path))
