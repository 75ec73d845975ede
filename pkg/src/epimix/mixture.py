"""Finite-mixture machinery with fixed equal weights, Beta-Bernoulli component
updates, Polya-urn predictives, and lazy stick-breaking draws.

Observation units are genotype slices summarized as per-locus minor-allele
counts (0..trials); components hold per-locus allele frequencies in (0, 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError
from .stats import RngStream

__all__ = [
    "MixtureState",
    "UrnState",
    "allocation_probabilities",
    "allocation_log_likelihoods",
    "gibbs_allocation_update",
    "component_posterior_update",
    "update_components",
    "urn_assignment_probabilities",
    "log_urn_assignment_probabilities",
    "StickState",
    "retrospective_draw",
    "FixedWeightMixtureSampler",
]

P_EPS = 1e-12          # keep frequencies strictly inside (0, 1)
STICK_CAP = 10 ** 6    # hard cap on lazily generated atoms


def _clip_unit(p):
    return np.clip(p, P_EPS, 1.0 - P_EPS)


@dataclass
class MixtureState:
    """Allocations and component parameters of one fixed-weight mixture block."""

    m_components: int
    z: np.ndarray              # (n,) component index per unit
    p: np.ndarray              # (M, L) allele frequencies in (0, 1)
    counts: np.ndarray = field(init=False)

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=int)
        self.p = _clip_unit(np.asarray(self.p, dtype=float))
        if self.z.size and (self.z.min() < 0 or self.z.max() >= self.m_components):
            raise NumericalError("allocation out of component range")
        self.counts = np.bincount(self.z, minlength=self.m_components)

    @property
    def occupied(self) -> int:
        return int(np.count_nonzero(self.counts))

    def refresh_counts(self):
        self.counts = np.bincount(self.z, minlength=self.m_components)


def allocation_log_likelihoods(success: np.ndarray, trials, p: np.ndarray) -> np.ndarray:
    """(n, M) log-likelihood of each unit under each component.

    `success` is (n, L) minor-allele counts, `trials` is the per-locus trial
    count (2 for diploid data, 1 for single-chromosome slices), `p` is (M, L).
    """
    success = np.atleast_2d(np.asarray(success, dtype=float))
    p = np.atleast_2d(np.asarray(p, dtype=float))
    trials = np.asarray(trials, dtype=float)
    logp = np.log(p)
    log1mp = np.log1p(-p)
    # (n, M): success @ logp.T + (trials - success) @ log1mp.T
    return success @ logp.T + (trials - success) @ log1mp.T


def allocation_probabilities(success, trials, p) -> np.ndarray:
    """Normalized allocation probabilities over components for one unit.

    With fixed equal weights the prior term cancels, so the vector is
    proportional to the per-component likelihood alone.
    """
    ll = allocation_log_likelihoods(np.atleast_2d(success), trials, p)[0]
    if not np.all(np.isfinite(ll)):
        raise NumericalError("non-finite allocation likelihood row")
    ll = ll - ll.max()
    w = np.exp(ll)
    return w / w.sum()


def _sample_rows(prob_rows: np.ndarray, g: np.random.Generator) -> np.ndarray:
    """Categorical sample per row via inverse CDF (one uniform per row)."""
    cum = np.cumsum(prob_rows, axis=1)
    u = g.random((prob_rows.shape[0], 1)) * cum[:, -1:]
    return (u > cum).sum(axis=1)


def gibbs_allocation_update(state: MixtureState, success, trials,
                            rng: RngStream) -> np.ndarray:
    """Resample every unit's allocation from its conditional; updates counts.

    Returns the per-unit log-likelihood row sums at the new allocations
    (the data contribution to the block's log-joint, up to the -log M terms).
    """
    ll = allocation_log_likelihoods(success, trials, state.p)
    shifted = ll - ll.max(axis=1, keepdims=True)
    w = np.exp(shifted)
    w /= w.sum(axis=1, keepdims=True)
    state.z = _sample_rows(w, rng.generator())
    state.refresh_counts()
    return ll[np.arange(ll.shape[0]), state.z]


def component_posterior_update(nu1, nu2, successes, trials):
    """Conjugate Beta update: returns (nu1 + s, nu2 + n - s)."""
    s = np.asarray(successes)
    n = np.asarray(trials)
    if np.any(s < 0) or np.any(s > n):
        raise NumericalError("successes must lie in [0, trials]")
    return nu1 + s, nu2 + (n - s)


def update_components(state: MixtureState, success, trials, nu1, nu2,
                      rng: RngStream) -> None:
    """Redraw all component frequencies: occupied components from their
    conjugate Beta posteriors, unoccupied ones from the prior.

    `nu1`/`nu2` broadcast to (M, L).
    """
    success = np.atleast_2d(np.asarray(success, dtype=float))
    n_units, n_loci = success.shape
    m = state.m_components
    nu1 = np.broadcast_to(np.asarray(nu1, dtype=float), (m, n_loci))
    nu2 = np.broadcast_to(np.asarray(nu2, dtype=float), (m, n_loci))
    # per-component sufficient statistics
    s_sum = np.zeros((m, n_loci))
    np.add.at(s_sum, state.z, success)
    n_sum = (state.counts.astype(float) * float(trials))[:, None]
    a = nu1 + s_sum
    b = nu2 + (n_sum - s_sum)
    state.p = _clip_unit(rng.generator().beta(a, b))


@dataclass
class UrnState:
    """Counts of an exchangeable urn plus its precision."""

    counts: np.ndarray
    alpha: float

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=float)
        if np.any(self.counts < 0):
            raise NumericalError("urn counts must be non-negative")
        if not self.alpha > 0:
            raise NumericalError("urn precision must be positive")


def urn_assignment_probabilities(urn: UrnState) -> np.ndarray:
    """(existing tables..., new table) probabilities: n_t/(n+a), a/(n+a)."""
    return np.exp(log_urn_assignment_probabilities(np.log(urn.counts,
                                                          out=np.full(urn.counts.shape, -np.inf),
                                                          where=urn.counts > 0),
                                                   np.log(urn.alpha)))


def log_urn_assignment_probabilities(log_counts: np.ndarray, log_alpha: float) -> np.ndarray:
    """Log-domain urn probabilities; safe for astronomically large precisions."""
    terms = np.append(np.asarray(log_counts, dtype=float), log_alpha)
    norm = _logsumexp(terms)
    return terms - norm


def _logsumexp(v):
    m = np.max(v)
    if not np.isfinite(m):
        return m
    return m + np.log(np.sum(np.exp(v - m)))


@dataclass
class StickState:
    """Lazily extended stick-breaking weights and their atoms."""

    fractions: list = field(default_factory=list)   # Beta(1, alpha) draws
    atoms: list = field(default_factory=list)
    weights: list = field(default_factory=list)
    partial_sums: list = field(default_factory=list)
    remaining: float = 1.0                          # prod (1 - v_l) so far

    def extend(self, fraction: float, atom) -> None:
        w = fraction * self.remaining
        self.fractions.append(fraction)
        self.atoms.append(atom)
        self.weights.append(w)
        prev = self.partial_sums[-1] if self.partial_sums else 0.0
        self.partial_sums.append(prev + w)
        self.remaining *= 1.0 - fraction


def retrospective_draw(base_sampler, stick: StickState, u: float, alpha: float,
                       rng: RngStream):
    """Select the atom whose cumulative stick weight first exceeds `u`,
    extending the stick (and drawing new atoms from the base measure) only as
    needed. Returns (atom index, atom value)."""
    if not 0.0 < u < 1.0:
        raise NumericalError(f"uniform deviate out of (0,1): {u}")
    for idx in range(STICK_CAP):
        if idx >= len(stick.fractions):
            g = rng.generator()
            stick.extend(float(g.beta(1.0, alpha)), base_sampler(rng))
        if u < stick.partial_sums[idx]:
            return idx, stick.atoms[idx]
    raise NumericalError("stick exhaustion: cumulative weight never reached u")


class FixedWeightMixtureSampler:
    """Standalone Gibbs sampler for one fixed-weight mixture block with a
    fixed Beta(nu1, nu2) prior on every component frequency.

    This is the reference configuration checked against the enumeration
    oracle; the model sweeps reuse the same update functions with
    hierarchical Beta parameters.
    """

    def __init__(self, success, trials, m_components, nu1=1.0, nu2=1.0, seed=0):
        self.success = np.atleast_2d(np.asarray(success, dtype=float))
        self.trials = float(trials)
        n, n_loci = self.success.shape
        self.nu1, self.nu2 = float(nu1), float(nu2)
        self.stream = RngStream(seed, ("fixedmix",))
        g = self.stream.generator()
        z0 = g.integers(0, m_components, size=n)
        p0 = g.beta(self.nu1, self.nu2, size=(m_components, n_loci))
        self.state = MixtureState(m_components, z0, p0)

    def sweep(self):
        update_components(self.state, self.success, self.trials,
                          self.nu1, self.nu2, self.stream)
        gibbs_allocation_update(self.state, self.success, self.trials, self.stream)

    def run(self, sweeps, burnin=0):
        """Run and accumulate posterior summaries: co-clustering frequencies,
        per-unit allocated frequencies, and occupancy counts."""
        n = self.success.shape[0]
        cocluster = np.zeros((n, n))
        unit_freq = np.zeros_like(self.success, dtype=float)
        occupied = np.zeros(sweeps - burnin, dtype=int)
        kept = 0
        for t in range(sweeps):
            self.sweep()
            if t >= burnin:
                same = self.state.z[:, None] == self.state.z[None, :]
                cocluster += same
                unit_freq += self.state.p[self.state.z]
                occupied[kept] = self.state.occupied
                kept += 1
        return {
            "cocluster": cocluster / kept,
            "unit_freq": unit_freq / kept,
            "occupied": occupied,
        }
