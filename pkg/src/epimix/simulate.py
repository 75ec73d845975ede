"""Synthetic case-control genotype generation with planted ground truth.

Default scheme: subjects come from K latent subpopulations with distinct
allele-frequency vectors; planted disease loci shift case frequencies by a
chosen amount. Model-based simulators (drawing from the gene-gene or
hierarchical-DP generative processes) live beside it for tests that need a
known parametric truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np
import yaml

from .data import GenotypeDataset
from .errors import DataError
from .stats import RngStream

__all__ = ["TruthSpec", "simulate_dataset", "simulate_gg_prior",
           "load_truth_spec", "save_truth_spec"]


@dataclass
class TruthSpec:
    """Planted ground truth for a stratified case-control simulation."""

    n_controls: int
    n_cases: int
    gene_loci: list                      # loci per gene, e.g. [5, 5, 5, 5]
    subpop_freqs: np.ndarray             # (K, R) allele frequencies in (0, 1)
    subpop_weights: np.ndarray | None = None
    dpl: list = field(default_factory=list)   # (flat locus index, delta_p)
    env_dim: int = 0
    env_kind: str = "normal"             # "normal" | "binary"
    env_group_shift: float = 0.0         # added to case-group environment means
    gene_cov: np.ndarray | None = None   # model-based gene covariance (optional)
    group_cov: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        self.subpop_freqs = np.atleast_2d(np.asarray(self.subpop_freqs, float))
        k, r = self.subpop_freqs.shape
        if r != sum(self.gene_loci):
            raise DataError(
                f"subpopulation frequencies cover {r} loci but gene map has "
                f"{sum(self.gene_loci)}"
            )
        if np.any(self.subpop_freqs <= 0) or np.any(self.subpop_freqs >= 1):
            raise DataError("subpopulation frequencies must lie strictly in (0,1)")
        if self.subpop_weights is None:
            self.subpop_weights = np.full(k, 1.0 / k)
        self.subpop_weights = np.asarray(self.subpop_weights, float)
        if self.subpop_weights.size != k or not np.isclose(self.subpop_weights.sum(), 1.0):
            raise DataError("subpopulation weights must sum to 1")
        for locus, delta in self.dpl:
            shifted = self.subpop_freqs[:, locus] + delta
            if np.any(shifted <= 0) or np.any(shifted >= 1):
                raise DataError(
                    f"planted frequency shift {delta} at locus {locus} leaves (0,1)"
                )

    @property
    def n_subpops(self) -> int:
        return self.subpop_freqs.shape[0]


def _dataset_from_freq_draws(spec: TruthSpec, case_freqs, g) -> tuple:
    n = spec.n_controls + spec.n_cases
    groups = np.concatenate([np.zeros(spec.n_controls, np.int8),
                             np.ones(spec.n_cases, np.int8)])
    membership = g.choice(spec.n_subpops, size=n, p=spec.subpop_weights)
    total_loci = sum(spec.gene_loci)
    freqs = np.where(groups[:, None] == 1,
                     case_freqs[membership], spec.subpop_freqs[membership])
    geno = (g.random((n, total_loci, 2)) < freqs[:, :, None]).astype(np.int8)
    env = np.zeros((n, spec.env_dim))
    if spec.env_dim:
        if spec.env_kind == "binary":
            env = g.integers(0, 2, size=(n, spec.env_dim)).astype(float)
        else:
            env = g.standard_normal((n, spec.env_dim))
        env[groups == 1] += spec.env_group_shift
    return groups, membership, geno, env


def simulate_dataset(spec: TruthSpec) -> tuple[GenotypeDataset, dict]:
    """Draw one dataset plus its ground-truth record."""
    g = RngStream(spec.seed, ("simulate",)).generator()
    case_freqs = spec.subpop_freqs.copy()
    for locus, delta in spec.dpl:
        case_freqs[:, locus] = case_freqs[:, locus] + delta
    groups, membership, geno, env = _dataset_from_freq_draws(spec, case_freqs, g)
    ds = GenotypeDataset(
        subject_ids=[f"s{i:04d}" for i in range(len(groups))],
        groups=groups,
        genotypes=geno,
        locus_names=[f"rs{r}" for r in range(sum(spec.gene_loci))],
        gene_names=[f"G{j}" for j in range(len(spec.gene_loci))],
        locus_gene=np.repeat(np.arange(len(spec.gene_loci)), spec.gene_loci),
        environment=env,
    )
    truth = {
        "membership": membership.tolist(),
        "dpl": [[int(l), float(d)] for l, d in spec.dpl],
        "n_subpops": spec.n_subpops,
        "seed": spec.seed,
    }
    return ds, truth


def simulate_gg_prior(n_controls, n_cases, gene_loci, gene_cov, group_cov,
                      m_components=5, seed=0, effect_sd=1.0):
    """Forward draw from the gene-gene generative process with a known
    gene/group covariance pair; returns (dataset, truth record).

    Locus effects ~ N(0,1); gene-group effects ~ matrix normal; component
    frequencies ~ Beta(exp(u + eff), exp(v + eff)); allocations uniform.
    """
    from .stats import MatrixNormalParams, sample_matrix_normal

    stream = RngStream(seed, ("simulate_gg",))
    g = stream.generator()
    n_genes = len(gene_loci)
    total_loci = sum(gene_loci)
    gene_cov = np.asarray(gene_cov, float)
    group_cov = np.asarray(group_cov, float)
    u = g.standard_normal(total_loci) * effect_sd
    v = g.standard_normal(total_loci) * effect_sd
    lam = sample_matrix_normal(
        MatrixNormalParams(np.zeros((n_genes, 2)), gene_cov, group_cov), stream
    )
    locus_gene = np.repeat(np.arange(n_genes), gene_loci)
    n = n_controls + n_cases
    groups = np.concatenate([np.zeros(n_controls, np.int8),
                             np.ones(n_cases, np.int8)])
    geno = np.zeros((n, total_loci, 2), np.int8)
    for j in range(n_genes):
        loci = np.flatnonzero(locus_gene == j)
        for k in (0, 1):
            rows = np.flatnonzero(groups == k)
            nu1 = np.exp(u[loci] + lam[j, k])
            nu2 = np.exp(v[loci] + lam[j, k])
            p = g.beta(np.broadcast_to(nu1, (m_components, loci.size)),
                       np.broadcast_to(nu2, (m_components, loci.size)))
            z = g.integers(0, m_components, size=rows.size)
            freq = p[z]
            geno[np.ix_(rows, loci)] = (
                g.random((rows.size, loci.size, 2)) < freq[:, :, None]
            ).astype(np.int8)
    ds = GenotypeDataset(
        subject_ids=[f"s{i:04d}" for i in range(n)],
        groups=groups,
        genotypes=geno,
        locus_names=[f"rs{r}" for r in range(total_loci)],
        gene_names=[f"G{j}" for j in range(n_genes)],
        locus_gene=locus_gene,
        environment=np.zeros((n, 0)),
    )
    truth = {"interaction": lam.tolist(), "locus_shape1": u.tolist(),
             "locus_shape2": v.tolist(), "seed": seed}
    return ds, truth


def save_truth_spec(spec: TruthSpec, path) -> None:
    d = asdict(spec)
    d["subpop_freqs"] = spec.subpop_freqs.tolist()
    d["subpop_weights"] = spec.subpop_weights.tolist()
    for key in ("gene_cov", "group_cov"):
        if d[key] is not None:
            d[key] = np.asarray(d[key]).tolist()
    d["dpl"] = [[int(l), float(x)] for l, x in spec.dpl]
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(d, fh, sort_keys=False)


def load_truth_spec(path) -> TruthSpec:
    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    try:
        return TruthSpec(**raw)
    except TypeError as exc:
        raise DataError(f"{path}: {exc}") from exc
