"""Exact brute-force references for desk-scale validation.

Nothing here uses random numbers: allocations are enumerated, component
frequencies are integrated on a uniform Simpson grid, and seating partitions
get their closed-form product probabilities.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

from .errors import DataError

__all__ = [
    "OracleResult",
    "brute_force_posterior",
    "exact_crp_partition_probs",
    "partition_of_labels",
]

ENUMERATION_BUDGET = 10 ** 8


@dataclass
class OracleResult:
    cocluster: np.ndarray            # (n, n) P(z_i == z_j | data)
    unit_freq: np.ndarray            # (n, L) E[p_{z_i, r} | data]
    allocation_marginals: np.ndarray  # (n, M) P(z_i == m | data)
    log_evidence: float


def brute_force_posterior(success, trials, m_components, nu1=1.0, nu2=1.0,
                          grid=101) -> OracleResult:
    """Exact-to-grid posterior summaries of a fixed-weight Beta-Bernoulli
    mixture: every allocation vector is enumerated and each component
    frequency is integrated on a uniform grid with Simpson weights.

    success: (n, L) minor-allele counts per unit and locus; trials: per-locus
    trial count. Enumeration size M^n * grid^(M*L) must stay within budget.
    """
    success = np.atleast_2d(np.asarray(success, dtype=int))
    n, n_loci = success.shape
    m = int(m_components)
    # quadrature factorizes over (component, locus), so the work is
    # M^n allocations times M*L one-dimensional grid integrals
    if m ** n * m * n_loci * grid > ENUMERATION_BUDGET:
        raise DataError("enumeration size exceeds oracle budget")
    if nu1 < 1.0 or nu2 < 1.0:
        raise DataError("grid oracle requires Beta shapes >= 1 (bounded integrand)")

    pgrid = np.linspace(0.0, 1.0, grid)
    prior = pgrid ** (nu1 - 1.0) * (1.0 - pgrid) ** (nu2 - 1.0)

    # cache Simpson integrals of p^s (1-p)^f * prior over (s, f) count pairs
    cache: dict[tuple[int, int], tuple[float, float]] = {}

    def moments(s_tot: int, f_tot: int) -> tuple[float, float]:
        key = (s_tot, f_tot)
        if key not in cache:
            integrand = pgrid ** s_tot * (1.0 - pgrid) ** f_tot * prior
            norm = simpson(integrand, x=pgrid)
            mean = simpson(pgrid * integrand, x=pgrid) / norm
            cache[key] = (float(norm), float(mean))
        return cache[key]

    prior_norm, _ = moments(0, 0)

    log_weights = []
    comp_means = []
    allocations = list(itertools.product(range(m), repeat=n))
    for z in allocations:
        z = np.asarray(z)
        logw = 0.0
        means = np.empty((m, n_loci))
        for comp in range(m):
            members = success[z == comp]
            s_tot = members.sum(axis=0) if members.size else np.zeros(n_loci, int)
            n_tot = members.shape[0] * trials
            for r in range(n_loci):
                norm, mean = moments(int(s_tot[r]), int(n_tot - s_tot[r]))
                logw += np.log(norm) - np.log(prior_norm)
                means[comp, r] = mean
        log_weights.append(logw)
        comp_means.append(means)

    log_weights = np.asarray(log_weights)
    w = np.exp(log_weights - log_weights.max())
    w /= w.sum()

    cocluster = np.zeros((n, n))
    unit_freq = np.zeros((n, n_loci))
    marginals = np.zeros((n, m))
    for wt, z, means in zip(w, allocations, comp_means):
        z = np.asarray(z)
        cocluster += wt * (z[:, None] == z[None, :])
        unit_freq += wt * means[z]
        marginals[np.arange(n), z] += wt
    log_evidence = float(
        log_weights.max() + np.log(np.sum(np.exp(log_weights - log_weights.max())))
        - n * np.log(m)
    )
    return OracleResult(cocluster, unit_freq, marginals, log_evidence)


def partition_of_labels(labels) -> tuple[tuple[int, ...], ...]:
    """Canonical set partition of 0..n-1 induced by a label vector: blocks as
    sorted tuples, ordered by their smallest element."""
    blocks: dict[int, list[int]] = {}
    for idx, lab in enumerate(labels):
        blocks.setdefault(lab, []).append(idx)
    return tuple(sorted((tuple(sorted(b)) for b in blocks.values()),
                        key=lambda b: b[0]))


def _set_partitions(items):
    if len(items) == 1:
        yield [items]
        return
    first, rest = items[0], items[1:]
    for smaller in _set_partitions(rest):
        for idx in range(len(smaller)):
            yield smaller[:idx] + [[first] + smaller[idx]] + smaller[idx + 1:]
        yield [[first]] + smaller


def exact_crp_partition_probs(n: int, alpha: float) -> dict:
    """Exact seating-partition distribution of an n-customer urn with
    precision alpha: P = alpha^B * prod (|b|-1)! / prod_{i<n} (alpha + i)."""
    if n > 8:
        raise DataError("exact partition enumeration is limited to n <= 8")
    if n < 1:
        raise DataError("need at least one customer")
    log_denom = np.sum(np.log(alpha + np.arange(n)))
    out = {}
    for blocks in _set_partitions(list(range(n))):
        logp = len(blocks) * np.log(alpha) - log_denom
        for b in blocks:
            logp += np.sum(np.log(np.arange(1, len(b))))
        key = tuple(sorted((tuple(sorted(b)) for b in blocks),
                           key=lambda b: b[0]))
        out[key] = float(np.exp(logp))
    return out
