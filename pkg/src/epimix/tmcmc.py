"""Transformation-driven MCMC block moves.

A single positive innovation and one sign per coordinate generate the whole
block proposal: additive moves x_i + b_i * a_i * eps (unit Jacobian) and
multiplicative moves x_i * eps^{b_i} (Jacobian eps^{sum b_i}). Kernels are
stateless; the caller owns the chain state and the random stream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .stats import RngStream

__all__ = [
    "TmcmcConfig",
    "TmcmcStepRecord",
    "additive_step",
    "multiplicative_step",
    "block_update",
]


@dataclass
class TmcmcConfig:
    additive_prob: float = 0.5       # probability of choosing the additive move
    scales: np.ndarray | float = 0.05  # per-coordinate a_i > 0
    innovation_scale: float = 1.0    # half-normal scale of eps

    def __post_init__(self):
        if not 0.0 <= self.additive_prob <= 1.0:
            raise ValueError("additive_prob must lie in [0, 1]")
        scales = np.asarray(self.scales, dtype=float)
        if np.any(scales <= 0):
            raise ValueError("scales must be positive")
        if self.innovation_scale <= 0:
            raise ValueError("innovation_scale must be positive")


@dataclass
class TmcmcStepRecord:
    move: str                 # "additive" | "multiplicative" | "additive_fallback"
    innovation: float
    accept_prob: float
    accepted: bool
    nan_rejected: bool = False
    log_target: float = field(default=np.nan)  # log target at the returned state


def _draw_innovation(cfg: TmcmcConfig, g: np.random.Generator, n: int):
    eps = abs(g.normal(0.0, cfg.innovation_scale))
    signs = g.integers(0, 2, size=n) * 2 - 1
    return eps, signs


def _accept(g, log_ratio):
    """Acceptance probability and decision from a log Metropolis ratio."""
    if np.isnan(log_ratio):
        return 0.0, False, True
    prob = float(min(1.0, np.exp(min(log_ratio, 0.0))))
    return prob, bool(g.random() < prob), False


def additive_step(x, target, cfg: TmcmcConfig, rng: RngStream,
                  current_lp: float | None = None):
    """One additive block move; returns (state, TmcmcStepRecord)."""
    return _step(x, target, cfg, rng, "additive", current_lp)


def multiplicative_step(x, target, cfg: TmcmcConfig, rng: RngStream,
                        current_lp: float | None = None):
    """One multiplicative block move; falls back to an additive move (logged)
    when any coordinate is exactly zero."""
    return _step(x, target, cfg, rng, "multiplicative", current_lp)


def block_update(x, target, cfg: TmcmcConfig, rng: RngStream,
                 current_lp: float | None = None):
    """Choose additive vs multiplicative by cfg.additive_prob, then move."""
    g = rng.generator()
    move = "additive" if g.random() < cfg.additive_prob else "multiplicative"
    return _step(x, target, cfg, rng, move, current_lp, g=g)


def _step(x, target, cfg, rng, move, current_lp, g=None):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if g is None:
        g = rng.generator()
    if current_lp is None:
        current_lp = float(target(x))
    if not np.isfinite(current_lp):
        raise ValueError(f"target not finite at current state: {current_lp}")

    if move == "multiplicative" and np.any(x == 0.0):
        move = "additive_fallback"

    eps, signs = _draw_innovation(cfg, g, x.size)
    scales = np.broadcast_to(np.asarray(cfg.scales, dtype=float), x.shape)
    if move == "multiplicative":
        proposal = x * eps ** signs
        log_jacobian = float(np.sum(signs)) * np.log(eps) if eps > 0 else -np.inf
    else:
        proposal = x + signs * scales * eps
        log_jacobian = 0.0

    proposal_lp = float(target(proposal))
    log_ratio = proposal_lp - current_lp + log_jacobian
    prob, accepted, nan_rejected = _accept(g, log_ratio)
    if accepted:
        out, out_lp = proposal, proposal_lp
    else:
        out, out_lp = x, current_lp
    record = TmcmcStepRecord(
        move=move, innovation=float(eps), accept_prob=prob,
        accepted=accepted, nan_rejected=nan_rejected, log_target=out_lp,
    )
    return out, record


# -- exact pieces used by tests and by vectorized per-locus updates ------------

def additive_propose(x, eps, signs, scales):
    return np.asarray(x, float) + np.asarray(signs, float) * np.asarray(scales, float) * eps


def multiplicative_propose(x, eps, signs):
    return np.asarray(x, float) * eps ** np.asarray(signs, float)


def additive_accept_prob(delta_log_target):
    return float(min(1.0, np.exp(min(delta_log_target, 0.0))))


def multiplicative_accept_prob(delta_log_target, eps, signs):
    log_ratio = delta_log_target + float(np.sum(signs)) * np.log(eps)
    return float(min(1.0, np.exp(min(log_ratio, 0.0))))


class ScaleTuner:
    """Burn-in scale adaptation toward an acceptance band, then frozen.

    Every `window` recorded steps during burn-in, the scale is multiplied
    by `grow` when acceptance exceeds the band and by `shrink` when below.
    After `freeze()` the scale never changes again, preserving stationarity.
    """

    def __init__(self, scale, band=(0.15, 0.40), window=100,
                 grow=1.5, shrink=0.6):
        self.scale = float(scale) if np.isscalar(scale) else np.asarray(scale, float)
        self.band = band
        self.window = window
        self.grow = grow
        self.shrink = shrink
        self._accepted = 0
        self._seen = 0
        self.frozen = False

    def record(self, accepted):
        """`accepted` may be a bool or a fractional acceptance rate."""
        if self.frozen:
            return
        self._accepted += float(accepted)
        self._seen += 1
        if self._seen >= self.window:
            rate = self._accepted / self._seen
            if rate > self.band[1]:
                self.scale = self.scale * self.grow
            elif rate < self.band[0]:
                self.scale = self.scale * self.shrink
            self._accepted = 0
            self._seen = 0

    def freeze(self):
        self.frozen = True
