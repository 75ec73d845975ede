"""Gene-gene interaction model.

Per (gene, group) block: a fixed-weight Bernoulli mixture over M latent
subpopulations. Component frequencies get Beta(shape1, shape2) priors whose
shapes are exp(locus effect + gene-group effect); the gene-group effect
matrix carries a matrix-normal prior with separable gene and case-control
covariances, each under an inverse-Wishart prior.

Sweep layout: parallel per-(gene, group) mixture updates, parallel per-gene
locus-effect updates, then central gene-group effect TMCMC and covariance
Gibbs updates.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betaln
from scipy.stats import invwishart

from .data import GenotypeDataset, allele_count_stats
from .engine import BlockPool
from .errors import NumericalError
from .mixture import MixtureState, gibbs_allocation_update, update_components
from .stats import (
    MAX_LOG,
    InverseWishartParams,
    MatrixNormalParams,
    RngStream,
    matrix_normal_logpdf,
    sample_inverse_wishart,
)
from .tmcmc import ScaleTuner, TmcmcConfig, block_update

__all__ = ["GgPriors", "GgState", "GgModel", "nu_gg", "lambda_log_target",
           "update_A_Sigma"]

TRIALS = 2  # two chromosomes per locus


def nu_gg(u_r: float, v_r: float, lam_jk: float) -> tuple[float, float]:
    """Beta shapes (exp(u_r + lam), exp(v_r + lam)); errors on overflow."""
    a1, a2 = u_r + lam_jk, v_r + lam_jk
    if abs(a1) > MAX_LOG or abs(a2) > MAX_LOG:
        raise NumericalError(
            f"shape exponent overflow: u={u_r}, v={v_r}, lam={lam_jk}"
        )
    return float(np.exp(a1)), float(np.exp(a2))


@dataclass
class GgPriors:
    interaction_mean: float = 0.0
    gene_cov_df: float = 0.0        # filled from config/J at init
    gene_cov_scale: np.ndarray = None
    group_cov_df: float = 4.0
    group_cov_scale: np.ndarray = None


@dataclass
class GgState:
    blocks: list                       # MixtureState per (j, k), index 2j+k
    u: np.ndarray                      # (R,) locus shape1 effects
    v: np.ndarray                      # (R,) locus shape2 effects
    lam: np.ndarray                    # (J, 2) gene-group effects
    gene_cov: np.ndarray               # (J, J)
    group_cov: np.ndarray              # (2, 2)
    priors: GgPriors
    block_streams: list = field(default_factory=list)
    gene_streams: list = field(default_factory=list)
    central_stream: RngStream = None
    data_loglik: np.ndarray = None     # per-block data log-lik pieces
    tuners: dict = field(default_factory=dict)
    group_index: list = None           # subject rows per group
    gene_loci: list = None

    def block(self, j: int, k: int) -> MixtureState:
        return self.blocks[2 * j + k]

    def check_invariants(self):
        np.linalg.cholesky(self.gene_cov)
        np.linalg.cholesky(self.group_cov)
        if np.any(np.abs(self.lam) > MAX_LOG) or np.any(np.abs(self.u) > MAX_LOG):
            raise NumericalError("effect parameters out of representable range")
        for st in self.blocks:
            if not np.array_equal(st.counts,
                                  np.bincount(st.z, minlength=st.m_components)):
                raise NumericalError("mixture counts inconsistent with allocations")


# -- block-level conditionals ---------------------------------------------------

def _nu_vectors(u, v, lam_jk):
    """Beta shape vectors for one block; -inf guard handled by caller."""
    return np.exp(u + lam_jk), np.exp(v + lam_jk)


def gg_block_update(payload):
    """Parallel-stage update of one (gene, group) block: component frequencies
    from their conjugate posteriors, then allocations. Returns the new
    allocations/frequencies, the stream, and the block's data log-likelihood.
    """
    success, z, p, nu1, nu2, stream = payload
    m = p.shape[0]
    state = MixtureState(m, z, p)
    update_components(state, success, TRIALS, nu1, nu2, stream)
    rows = gibbs_allocation_update(state, success, TRIALS, stream)
    return state.z, state.p, float(rows.sum()), stream


def beta_prior_terms(log_p_sum, log_1mp_sum, nu1, nu2, m_components):
    """Sum over components and loci of Beta log-densities with shared shapes.

    log_p_sum / log_1mp_sum are per-locus sums over components of log p and
    log(1-p).
    """
    return float(
        np.sum((nu1 - 1.0) * log_p_sum + (nu2 - 1.0) * log_1mp_sum
               - m_components * betaln(nu1, nu2))
    )


def lambda_log_target(lam: np.ndarray, state: GgState, gene_loci,
                      block_logsums, m_components) -> float:
    """Log full conditional of the gene-group effect matrix: matrix-normal
    prior plus all Beta prior terms (with their shape-dependent normalizers).
    """
    lam = np.asarray(lam, dtype=float).reshape(len(gene_loci), 2)
    if np.any(np.abs(lam) > MAX_LOG):
        return -np.inf
    prior = matrix_normal_logpdf(
        lam,
        MatrixNormalParams(
            np.full(lam.shape, state.priors.interaction_mean),
            state.gene_cov, state.group_cov,
        ),
    )
    total = prior
    for j, loci in enumerate(gene_loci):
        u_j, v_j = state.u[loci], state.v[loci]
        for k in (0, 1):
            arg1, arg2 = u_j + lam[j, k], v_j + lam[j, k]
            if np.any(arg1 > MAX_LOG) or np.any(arg2 > MAX_LOG):
                return -np.inf
            lp, l1p = block_logsums[2 * j + k]
            total += beta_prior_terms(lp, l1p, np.exp(arg1), np.exp(arg2),
                                      m_components)
    if np.isnan(total):
        return -np.inf
    return float(total)


def locus_effect_update(payload):
    """Vectorized per-locus additive TMCMC on (u_r, v_r) pairs of one gene.

    Each locus is an independent two-coordinate block driven by its own
    innovation; priors are standard normal, likelihood sums the Beta terms of
    both groups' components at that locus.
    """
    u, v, lam_j, log_p, log_1mp, m_components, scale, stream = payload
    n_loci = u.size
    g = stream.generator()
    eps = np.abs(g.normal(0.0, 1.0, size=n_loci))
    sign_u = g.integers(0, 2, size=n_loci) * 2 - 1
    sign_v = g.integers(0, 2, size=n_loci) * 2 - 1
    accept_u = g.random(n_loci)

    def target(uu, vv):
        out = -0.5 * (uu * uu + vv * vv)
        for k in (0, 1):
            arg1, arg2 = uu + lam_j[k], vv + lam_j[k]
            bad = (arg1 > MAX_LOG) | (arg2 > MAX_LOG)
            nu1 = np.exp(np.minimum(arg1, MAX_LOG))
            nu2 = np.exp(np.minimum(arg2, MAX_LOG))
            term = ((nu1 - 1.0) * log_p[k] + (nu2 - 1.0) * log_1mp[k]
                    - m_components * betaln(nu1, nu2))
            term = np.where(bad, -np.inf, term)
            out = out + term
        return out

    u_new = u + sign_u * scale * eps
    v_new = v + sign_v * scale * eps
    log_ratio = target(u_new, v_new) - target(u, v)
    accepted = np.log(accept_u) < log_ratio
    u = np.where(accepted, u_new, u)
    v = np.where(accepted, v_new, v)
    return u, v, int(accepted.sum()), n_loci, stream


def update_A_Sigma(lam_stack: np.ndarray, mean, gene_df, gene_scale,
                   group_df, group_scale, gene_cov, group_cov,
                   rng: RngStream):
    """Conjugate inverse-Wishart Gibbs pair for the separable covariances.

    `lam_stack` is (n, J, 2): the model uses n=1; validation fits use stacks.
    Row covariance | column covariance ~ IW(df + n*2, scale + sum D S^-1 D^T);
    column | row ~ IW(df + n*J, scale + sum D^T A^-1 D).
    """
    lam_stack = np.asarray(lam_stack, dtype=float)
    if lam_stack.ndim == 2:
        lam_stack = lam_stack[None]
    n, n_genes, _ = lam_stack.shape
    diff = lam_stack - mean
    sig_inv = np.linalg.inv(group_cov)
    scatter_gene = sum(d @ sig_inv @ d.T for d in diff)
    gene_cov = sample_inverse_wishart(
        InverseWishartParams(gene_df + 2 * n, gene_scale + scatter_gene), rng
    )
    a_inv = np.linalg.inv(gene_cov)
    scatter_group = sum(d.T @ a_inv @ d for d in diff)
    group_cov = sample_inverse_wishart(
        InverseWishartParams(group_df + n_genes * n, group_scale + scatter_group),
        rng,
    )
    return gene_cov, group_cov


# -- model driver ----------------------------------------------------------------

class GgModel:
    """Sweep/record implementation consumed by engine.run_chain."""

    stat_names = ("log_joint", "accept_interaction", "accept_locus",
                  "occupied_mean")

    def prepare(self, ds: GenotypeDataset, cfg) -> None:
        """Derive the per-block sufficient statistics (idempotent; also used
        when resuming from a checkpoint)."""
        counts = allele_count_stats(ds)
        group_index = [ds.group_index(0), ds.group_index(1)]
        self._success = [
            counts[np.ix_(group_index[k], ds.gene_loci[j])].astype(float)
            for j in range(ds.n_genes) for k in (0, 1)
        ]

    def init(self, ds: GenotypeDataset, cfg) -> GgState:
        ds.require_both_groups()
        n_genes = ds.n_genes
        root = RngStream(cfg.seed, ("gg",))
        g = root.child("init").generator()
        u = g.standard_normal(ds.n_loci)
        v = g.standard_normal(ds.n_loci)
        lam = np.zeros((n_genes, 2))
        priors = GgPriors(
            interaction_mean=cfg.interaction_prior_mean,
            gene_cov_df=(cfg.gene_cov_df if cfg.gene_cov_df is not None
                         else n_genes + 2),
            gene_cov_scale=np.eye(n_genes) * cfg.gene_cov_scale,
            group_cov_df=cfg.group_cov_df,
            group_cov_scale=np.eye(2) * cfg.group_cov_scale,
        )
        self.prepare(ds, cfg)
        group_index = [ds.group_index(0), ds.group_index(1)]
        blocks, block_streams = [], []
        for j in range(n_genes):
            loci = ds.gene_loci[j]
            for k in (0, 1):
                rows = group_index[k]
                nu1, nu2 = _nu_vectors(u[loci], v[loci], 0.0)
                z0 = g.integers(0, cfg.components, size=rows.size)
                p0 = g.beta(np.broadcast_to(nu1, (cfg.components, loci.size)),
                            np.broadcast_to(nu2, (cfg.components, loci.size)))
                blocks.append(MixtureState(cfg.components, z0, p0))
                block_streams.append(root.child("block", j, k))
        state = GgState(
            blocks=blocks, u=u, v=v, lam=lam,
            gene_cov=np.eye(n_genes), group_cov=np.eye(2),
            priors=priors,
            block_streams=block_streams,
            gene_streams=[root.child("locus", j) for j in range(n_genes)],
            central_stream=root.child("central"),
            data_loglik=np.zeros(len(blocks)),
            group_index=group_index,
            gene_loci=[ds.gene_loci[j] for j in range(n_genes)],
        )
        state.tuners = {
            "interaction": ScaleTuner(cfg.tmcmc.interaction_scale,
                                      band=cfg.tmcmc.tune_band,
                                      window=cfg.tmcmc.tune_window),
            "locus": ScaleTuner(cfg.tmcmc.locus_scale,
                                band=cfg.tmcmc.tune_band,
                                window=cfg.tmcmc.tune_window),
        }
        return state

    # payload builders keep worker functions top-level and picklable
    def _block_payloads(self, state: GgState):
        payloads = []
        for j, loci in enumerate(state.gene_loci):
            for k in (0, 1):
                idx = 2 * j + k
                st = state.blocks[idx]
                nu1, nu2 = _nu_vectors(state.u[loci], state.v[loci],
                                       state.lam[j, k])
                payloads.append((self._success[idx], st.z, st.p, nu1, nu2,
                                 state.block_streams[idx]))
        return payloads

    def sweep(self, state: GgState, ds, cfg, pool: BlockPool, t: int) -> dict:
        t0 = time.perf_counter()
        # stage 1: parallel per-(gene, group) mixture updates
        results = pool.map_blocks(
            gg_block_update, self._block_payloads(state),
            costs=[s.shape[0] * s.shape[1] for s in self._success],
        )
        for idx, (z, p, loglik, stream) in enumerate(results):
            st = state.blocks[idx]
            st.z, st.p = z, p
            st.refresh_counts()
            state.data_loglik[idx] = loglik
            state.block_streams[idx] = stream

        # per-locus sums over components feed every shape-effect conditional
        block_logsums = [
            (np.log(st.p).sum(axis=0), np.log1p(-st.p).sum(axis=0))
            for st in state.blocks
        ]

        # stage 2: parallel per-gene locus-effect updates
        locus_scale = state.tuners["locus"].scale
        payloads = []
        for j, loci in enumerate(state.gene_loci):
            log_p = [block_logsums[2 * j + k][0] for k in (0, 1)]
            log_1mp = [block_logsums[2 * j + k][1] for k in (0, 1)]
            payloads.append((state.u[loci], state.v[loci], state.lam[j],
                             log_p, log_1mp, cfg.components, locus_scale,
                             state.gene_streams[j]))
        locus_results = pool.map_blocks(
            locus_effect_update, payloads,
            costs=[loci.size for loci in state.gene_loci],
        )
        locus_accepted = locus_trials = 0
        for j, (u_j, v_j, n_acc, n_tot, stream) in enumerate(locus_results):
            state.u[state.gene_loci[j]] = u_j
            state.v[state.gene_loci[j]] = v_j
            state.gene_streams[j] = stream
            locus_accepted += n_acc
            locus_trials += n_tot
        t1 = time.perf_counter()

        # stage 3 (central): gene-group effects then covariance pair
        cfg_lam = TmcmcConfig(
            additive_prob=cfg.tmcmc.additive_prob_interaction,
            scales=state.tuners["interaction"].scale,
            innovation_scale=cfg.tmcmc.innovation_scale,
        )
        target = lambda x: lambda_log_target(
            x, state, state.gene_loci, block_logsums, cfg.components
        )
        lam_new, rec = block_update(state.lam.ravel(), target, cfg_lam,
                                    state.central_stream)
        state.lam = lam_new.reshape(state.lam.shape)

        state.gene_cov, state.group_cov = update_A_Sigma(
            state.lam, state.priors.interaction_mean,
            state.priors.gene_cov_df, state.priors.gene_cov_scale,
            state.priors.group_cov_df, state.priors.group_cov_scale,
            state.gene_cov, state.group_cov, state.central_stream,
        )
        central_seconds = time.perf_counter() - t1

        log_joint = self._log_joint_from_pieces(state, block_logsums, cfg)
        return {
            "log_joint": log_joint,
            "accept_interaction": float(rec.accepted),
            "accept_locus": locus_accepted / max(locus_trials, 1),
            "occupied_mean": float(np.mean([s.occupied for s in state.blocks])),
            "_parallel_seconds": t1 - t0,
            "_central_seconds": central_seconds,
        }

    def _log_joint_from_pieces(self, state: GgState, block_logsums, cfg,
                               data_total=None) -> float:
        if data_total is None:
            data_total = float(state.data_loglik.sum())
        total = data_total
        total += -np.log(cfg.components) * sum(
            st.z.size for st in state.blocks
        )
        for j, loci in enumerate(state.gene_loci):
            for k in (0, 1):
                nu1, nu2 = _nu_vectors(state.u[loci], state.v[loci],
                                       state.lam[j, k])
                lp, l1p = block_logsums[2 * j + k]
                total += beta_prior_terms(lp, l1p, nu1, nu2, cfg.components)
        total += float(-0.5 * np.sum(state.u ** 2) - 0.5 * np.sum(state.v ** 2)
                       - state.u.size * np.log(2 * np.pi))
        total += matrix_normal_logpdf(
            state.lam,
            MatrixNormalParams(
                np.full(state.lam.shape, state.priors.interaction_mean),
                state.gene_cov, state.group_cov,
            ),
        )
        total += float(invwishart.logpdf(state.gene_cov,
                                         df=state.priors.gene_cov_df,
                                         scale=state.priors.gene_cov_scale))
        total += float(invwishart.logpdf(state.group_cov,
                                         df=state.priors.group_cov_df,
                                         scale=state.priors.group_cov_scale))
        return total

    def log_joint(self, state: GgState, ds, cfg) -> float:
        """From-scratch recomputation (data likelihood re-derived from z, p)."""
        from .mixture import allocation_log_likelihoods

        block_logsums = []
        data_total = 0.0
        for idx, st in enumerate(state.blocks):
            rows = allocation_log_likelihoods(self._success[idx], TRIALS, st.p)
            data_total += float(rows[np.arange(rows.shape[0]), st.z].sum())
            block_logsums.append(
                (np.log(st.p).sum(axis=0), np.log1p(-st.p).sum(axis=0))
            )
        return self._log_joint_from_pieces(state, block_logsums, cfg,
                                           data_total=data_total)

    def tune(self, state: GgState, diag: dict) -> None:
        state.tuners["interaction"].record(diag["accept_interaction"])
        state.tuners["locus"].record(diag["accept_locus"])

    def freeze_tuning(self, state: GgState) -> None:
        for tuner in state.tuners.values():
            tuner.freeze()

    def record(self, state: GgState, ds, cfg) -> dict:
        n_loci = ds.n_loci
        group_freq = np.zeros((n_loci, 2))
        for j, loci in enumerate(state.gene_loci):
            for k in (0, 1):
                st = state.block(j, k)
                group_freq[loci, k] = st.p[st.z].mean(axis=0)
        return {
            "group_freq": group_freq,
            "occupied": np.array([s.occupied for s in state.blocks], float),
            "interaction": state.lam,
            "gene_cov": state.gene_cov,
            "group_cov": state.group_cov,
            "locus_shape1": state.u,
            "locus_shape2": state.v,
        }

    def acceptance_rates(self, state, sweep_stats, cfg) -> dict:
        post = slice(cfg.burnin, cfg.iterations)
        return {
            "interaction": float(np.nanmean(sweep_stats["accept_interaction"][post])),
            "locus": float(np.nanmean(sweep_stats["accept_locus"][post])),
        }
