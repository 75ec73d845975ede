"""Run configuration: dataclass, validation, and YAML round-trip."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np
import yaml

from .errors import ConfigError

__all__ = ["RunConfig", "load_config", "save_config"]

MODELS = ("gg", "ge", "hdp")


@dataclass
class TmcmcSettings:
    """Kernel settings per block family. Scales are starting values; they are
    tuned toward the acceptance band during burn-in and then frozen."""

    interaction_scale: float = 0.05      # gene-group effect blocks
    locus_scale: float = 0.05            # per-locus shape-effect blocks
    env_scale: float = 0.05              # environment-coefficient blocks
    subject_scale: float = 0.10          # per-subject effect blocks
    precision_scale: float = 0.01        # precision-regression block
    additive_prob_interaction: float = 1.0   # sign changes need additive moves
    additive_prob_precision: float = 0.5     # additive/multiplicative mixture
    innovation_scale: float = 1.0
    tune_band: tuple = (0.15, 0.40)
    tune_window: int = 100


@dataclass
class RunConfig:
    model: str = "gg"
    components: int = 30             # mixture slots per block (M)
    iterations: int = 30_000
    burnin: int = 10_000
    thinning: int = 10
    workers: int = 1
    seed: int = 0
    # shared Beta base measure
    base_shape1: float = 1.0
    base_shape2: float = 1.0
    # gene-gene / gene-environment hierarchy
    interaction_prior_mean: float = 0.0   # mean of the gene-group effect matrix
    gene_cov_df: int | None = None        # None -> n_genes + 2
    group_cov_df: float = 4.0
    gene_cov_scale: float = 1.0           # identity scale multiplier
    group_cov_scale: float = 1.0
    # gene-environment extras
    intercept_sd: float = 1.0             # gene-group intercept prior sd
    env_slope_sd: float = 1.0             # environment coefficient prior sd
    subject_effect_sd: float = 1.0        # subject-level effect sd around gene mean
    # hierarchical DP precision regression
    precision_offset: float = 100.0       # additive constant inside exp()
    precision_scale_factor: float = 0.1   # multiplier outside exp()
    # testing defaults
    dpl_delta: float = 0.05
    dpl_prob_threshold: float = 0.5
    calibration_quantile: float = 0.55
    # runtime
    checkpoint_interval: int = 1000
    log_joint_check_interval: int = 100
    tmcmc: TmcmcSettings = field(default_factory=TmcmcSettings)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.burnin >= self.iterations:
            raise ConfigError(
                f"burn-in ({self.burnin}) must be smaller than iterations "
                f"({self.iterations})"
            )
        if self.burnin < 0 or self.thinning < 1:
            raise ConfigError("burn-in must be >= 0 and thinning >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.components < 1:
            raise ConfigError("components must be >= 1")
        if self.base_shape1 <= 0 or self.base_shape2 <= 0:
            raise ConfigError("base Beta shapes must be positive")
        if not 0.0 < self.calibration_quantile < 1.0:
            raise ConfigError("calibration quantile must lie in (0, 1)")
        if self.dpl_delta <= 0:
            raise ConfigError("allele-frequency threshold must be positive")

    @property
    def n_retained(self) -> int:
        return (self.iterations - self.burnin) // self.thinning

    def replace(self, **kw) -> "RunConfig":
        d = asdict(self)
        tm = d.pop("tmcmc")
        tm.update(kw.pop("tmcmc", {}))
        d.update(kw)
        return RunConfig(tmcmc=TmcmcSettings(**_fix_tuple(tm)), **d)

    def to_dict(self) -> dict:
        return asdict(self)


def _fix_tuple(tm: dict) -> dict:
    if "tune_band" in tm:
        tm["tune_band"] = tuple(tm["tune_band"])
    return tm


def load_config(path) -> RunConfig:
    """Read a RunConfig from nested key-value YAML."""
    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    known = {f.name for f in fields(RunConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    tm = raw.pop("tmcmc", {})
    try:
        return RunConfig(tmcmc=TmcmcSettings(**_fix_tuple(tm)), **raw)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def save_config(cfg: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(_plain(cfg.to_dict()), fh, sort_keys=False)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj
