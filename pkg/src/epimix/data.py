"""Case-control genotype data structures, file ingest, and serialization.

Genotypes are stored per chromosome as binary minor-allele indicators in an
(N, R, 2) array; loci are grouped into genes by a locus-to-gene map. Datasets
are read-only after construction.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)

__all__ = [
    "GenotypeDataset",
    "load_dataset",
    "load_dosage_dataset",
    "save_dataset",
    "diploid_view",
    "permute_locus_labels",
    "locus_permutation",
]


@dataclass
class GenotypeDataset:
    """Validated case-control genotype data with an optional environment matrix.

    genotypes[i, r, s] is the minor-allele indicator for subject i, locus r
    (flat index over all genes), chromosome s in {0, 1}. `gene_loci[j]` lists
    the flat locus indices belonging to gene j, in column order.
    """

    subject_ids: list[str]
    groups: np.ndarray                 # (N,) int8, 0 control / 1 case
    genotypes: np.ndarray              # (N, R, 2) int8 in {0, 1}
    locus_names: list[str]
    gene_names: list[str]
    locus_gene: np.ndarray             # (R,) int, gene index per locus
    environment: np.ndarray            # (N, d) float, d may be 0
    gene_loci: list[np.ndarray] = field(init=False)

    def __post_init__(self):
        self.groups = np.asarray(self.groups, dtype=np.int8)
        self.genotypes = np.asarray(self.genotypes, dtype=np.int8)
        self.locus_gene = np.asarray(self.locus_gene, dtype=int)
        self.environment = np.atleast_2d(np.asarray(self.environment, dtype=float))
        if self.environment.shape[0] != len(self.subject_ids) and self.environment.size == 0:
            self.environment = np.zeros((len(self.subject_ids), 0))
        self.gene_loci = [
            np.flatnonzero(self.locus_gene == j) for j in range(len(self.gene_names))
        ]
        self.validate()

    # -- shape helpers -------------------------------------------------------

    @property
    def n_subjects(self) -> int:
        return len(self.subject_ids)

    @property
    def n_loci(self) -> int:
        return len(self.locus_names)

    @property
    def n_genes(self) -> int:
        return len(self.gene_names)

    @property
    def env_dim(self) -> int:
        return self.environment.shape[1]

    def group_size(self, k: int) -> int:
        return int(np.sum(self.groups == k))

    def group_index(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.groups == k)

    def loci_of_gene(self, j: int) -> np.ndarray:
        return self.gene_loci[j]

    def validate(self) -> None:
        n, r = len(self.subject_ids), len(self.locus_names)
        if self.genotypes.shape != (n, r, 2):
            raise DataError(
                f"genotype array shape {self.genotypes.shape} != {(n, r, 2)}"
            )
        if self.groups.shape != (n,):
            raise DataError("group labels do not match subject count")
        if not np.isin(self.groups, (0, 1)).all():
            raise DataError("group labels must be 0 or 1")
        if not np.isin(self.genotypes, (0, 1)).all():
            raise DataError("non-binary genotype value")
        if self.locus_gene.shape != (r,):
            raise DataError("locus-to-gene map does not match locus count")
        if r and (self.locus_gene.min() < 0 or self.locus_gene.max() >= self.n_genes):
            raise DataError("locus-to-gene map references unknown gene")
        for j, loci in enumerate(self.gene_loci):
            if loci.size == 0:
                raise DataError(f"gene {self.gene_names[j]!r} has no loci")
        if self.environment.shape[0] != n:
            raise DataError("environment rows do not match subject count")

    def require_both_groups(self) -> None:
        if self.group_size(0) == 0 or self.group_size(1) == 0:
            raise DataError("model fitting requires both cases and controls")

    def require_environment(self) -> None:
        if self.env_dim == 0:
            raise DataError("environment required")


def diploid_view(ds: GenotypeDataset, i: int, j: int, r: int) -> tuple[int, int]:
    """Both chromosome indicators for subject i at locus r of gene j.

    r indexes within the gene; no reordering is applied.
    """
    if not 0 <= i < ds.n_subjects:
        raise DataError(f"subject index out of range: {i}")
    if not 0 <= j < ds.n_genes:
        raise DataError(f"gene index out of range: {j}")
    loci = ds.gene_loci[j]
    if not 0 <= r < loci.size:
        raise DataError(f"locus index out of range for gene {j}: {r}")
    flat = loci[r]
    return int(ds.genotypes[i, flat, 0]), int(ds.genotypes[i, flat, 1])


def locus_permutation(ds: GenotypeDataset, seed: int) -> list[np.ndarray]:
    """The within-gene column permutations applied by `permute_locus_labels`
    for this seed (one array per gene, mapping new position -> old position)."""
    g = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    return [g.permutation(loci.size) for loci in ds.gene_loci]


def permute_locus_labels(ds: GenotypeDataset, seed: int) -> GenotypeDataset:
    """Permute locus columns within each gene by a seeded uniform permutation.

    Gene boundaries are unchanged; the multiset of per-gene columns is
    preserved. The permutation used is logged and recoverable via
    `locus_permutation(ds, seed)`.
    """
    perms = locus_permutation(ds, seed)
    new_order = np.arange(ds.n_loci)
    for j, loci in enumerate(ds.gene_loci):
        new_order[loci] = loci[perms[j]]
        log.info(
            "permuted loci of gene %s with seed %d: %s",
            ds.gene_names[j], seed, perms[j].tolist(),
        )
    return GenotypeDataset(
        subject_ids=list(ds.subject_ids),
        groups=ds.groups.copy(),
        genotypes=ds.genotypes[:, new_order, :].copy(),
        locus_names=[ds.locus_names[o] for o in new_order],
        gene_names=list(ds.gene_names),
        locus_gene=ds.locus_gene.copy(),
        environment=ds.environment.copy(),
    )


# -- file ingest ---------------------------------------------------------------
#
# Genotype file: header `subject,group,chrom,<locus_1>,...,<locus_R>`,
#                one row per (subject, chromosome), values 0/1.
# Gene map file: header `locus,gene`.
# Environment file: header `subject,<cov_1>,...,<cov_d>`.
# All files UTF-8, comma-delimited, `.` decimal point, exact column order.


def _fail(path, line_no, message):
    raise DataError(f"{path}:{line_no}: {message}")


def _read_genemap(path) -> tuple[list[str], list[str], dict[str, int]]:
    locus_to_gene: dict[str, str] = {}
    order: list[str] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["locus", "gene"]:
            _fail(path, 1, "gene map header must be 'locus,gene'")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                _fail(path, line_no, f"expected 2 columns, got {len(row)}")
            locus, gene = row[0].strip(), row[1].strip()
            if locus in locus_to_gene:
                _fail(path, line_no, f"duplicate locus {locus!r}")
            locus_to_gene[locus] = gene
            order.append(locus)
    gene_names = sorted(set(locus_to_gene.values()))
    gene_index = {gname: j for j, gname in enumerate(gene_names)}
    return order, gene_names, {l: gene_index[g] for l, g in locus_to_gene.items()}


def _parse_genotype_header(path, header):
    expect = ["subject", "group", "chrom"]
    if header is None or [h.strip() for h in header[:3]] != expect:
        _fail(path, 1, "genotype header must start with 'subject,group,chrom'")
    loci = [h.strip() for h in header[3:]]
    if not loci:
        _fail(path, 1, "genotype file has no locus columns")
    return loci


def load_dataset(genotype_path, genemap_path, env_path=None) -> GenotypeDataset:
    """Load and validate a dataset from the delimited text formats."""
    genotype_path, genemap_path = Path(genotype_path), Path(genemap_path)
    _, gene_names, locus_to_gene_idx = _read_genemap(genemap_path)

    subjects: list[str] = []
    subj_index: dict[str, int] = {}
    groups: dict[str, int] = {}
    rows: dict[tuple[str, int], np.ndarray] = {}
    with open(genotype_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        loci = _parse_genotype_header(genotype_path, next(reader, None))
        for name in loci:
            if name not in locus_to_gene_idx:
                _fail(genotype_path, 1, f"locus {name!r} missing from gene map")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3 + len(loci):
                _fail(genotype_path, line_no,
                      f"expected {3 + len(loci)} columns, got {len(row)}")
            sid, group_s, chrom_s = row[0].strip(), row[1].strip(), row[2].strip()
            if group_s not in ("0", "1"):
                _fail(genotype_path, line_no, f"group must be 0 or 1, got {group_s!r}")
            if chrom_s not in ("1", "2"):
                _fail(genotype_path, line_no, f"chrom must be 1 or 2, got {chrom_s!r}")
            values = np.empty(len(loci), dtype=np.int8)
            for c, v in enumerate(row[3:]):
                v = v.strip()
                if v not in ("0", "1"):
                    _fail(genotype_path, line_no,
                          f"non-binary genotype value {v!r} in column {loci[c]!r}")
                values[c] = int(v)
            if sid not in subj_index:
                subj_index[sid] = len(subjects)
                subjects.append(sid)
                groups[sid] = int(group_s)
            elif groups[sid] != int(group_s):
                _fail(genotype_path, line_no, f"conflicting group for subject {sid!r}")
            key = (sid, int(chrom_s))
            if key in rows:
                _fail(genotype_path, line_no,
                      f"duplicate row for subject {sid!r} chromosome {chrom_s}")
            rows[key] = values

    geno = np.zeros((len(subjects), len(loci), 2), dtype=np.int8)
    for sid in subjects:
        for s in (1, 2):
            if (sid, s) not in rows:
                _fail(genotype_path, 1,
                      f"subject {sid!r} is missing chromosome {s} row")
        geno[subj_index[sid], :, 0] = rows[(sid, 1)]
        geno[subj_index[sid], :, 1] = rows[(sid, 2)]

    env = np.zeros((len(subjects), 0))
    if env_path is not None:
        env = _read_environment(Path(env_path), subjects, subj_index)

    return GenotypeDataset(
        subject_ids=subjects,
        groups=np.array([groups[s] for s in subjects], dtype=np.int8),
        genotypes=geno,
        locus_names=loci,
        gene_names=gene_names,
        locus_gene=np.array([locus_to_gene_idx[l] for l in loci], dtype=int),
        environment=env,
    )


def _read_environment(path, subjects, subj_index) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0].strip() != "subject":
            _fail(path, 1, "environment header must start with 'subject'")
        d = len(header) - 1
        env = np.full((len(subjects), d), np.nan)
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            sid = row[0].strip()
            if sid not in subj_index:
                _fail(path, line_no,
                      f"subject {sid!r} absent from genotype file")
            if len(row) != d + 1:
                _fail(path, line_no, f"expected {d + 1} columns, got {len(row)}")
            try:
                env[subj_index[sid]] = [float(v) for v in row[1:]]
            except ValueError:
                _fail(path, line_no, "non-numeric environment value")
    missing = np.flatnonzero(np.isnan(env).any(axis=1))
    if missing.size:
        _fail(path, 1, f"subject {subjects[missing[0]]!r} has no environment row")
    return env


def load_dosage_dataset(dosage_path, genemap_path, env_path=None) -> GenotypeDataset:
    """Ingest adaptor for dosage files: header `subject,group,<locus...>`,
    one row per subject, values 0/1/2 converted to unordered chromosome pairs
    with the heterozygote stored as (1, 0)."""
    dosage_path = Path(dosage_path)
    _, gene_names, locus_to_gene_idx = _read_genemap(Path(genemap_path))
    subjects, group_list, geno_rows = [], [], []
    with open(dosage_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["subject", "group"]:
            _fail(dosage_path, 1, "dosage header must start with 'subject,group'")
        loci = [h.strip() for h in header[2:]]
        for name in loci:
            if name not in locus_to_gene_idx:
                _fail(dosage_path, 1, f"locus {name!r} missing from gene map")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            sid, group_s = row[0].strip(), row[1].strip()
            if group_s not in ("0", "1"):
                _fail(dosage_path, line_no, f"group must be 0 or 1, got {group_s!r}")
            pair = np.zeros((len(loci), 2), dtype=np.int8)
            for c, v in enumerate(row[2:]):
                v = v.strip()
                if v not in ("0", "1", "2"):
                    _fail(dosage_path, line_no, f"dosage value must be 0/1/2, got {v!r}")
                d = int(v)
                pair[c, 0] = 1 if d >= 1 else 0
                pair[c, 1] = 1 if d == 2 else 0
            subjects.append(sid)
            group_list.append(int(group_s))
            geno_rows.append(pair)
    env = np.zeros((len(subjects), 0))
    if env_path is not None:
        env = _read_environment(
            Path(env_path), subjects, {s: i for i, s in enumerate(subjects)}
        )
    return GenotypeDataset(
        subject_ids=subjects,
        groups=np.array(group_list, dtype=np.int8),
        genotypes=np.stack(geno_rows, axis=0),
        locus_names=loci,
        gene_names=gene_names,
        locus_gene=np.array([locus_to_gene_idx[l] for l in loci], dtype=int),
        environment=env,
    )


def save_dataset(ds: GenotypeDataset, genotype_path, genemap_path, env_path=None) -> None:
    """Write a dataset back to the delimited text formats (round-trips with
    `load_dataset` cell-for-cell)."""
    with open(genotype_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject", "group", "chrom", *ds.locus_names])
        for i, sid in enumerate(ds.subject_ids):
            for s in (0, 1):
                writer.writerow(
                    [sid, int(ds.groups[i]), s + 1,
                     *ds.genotypes[i, :, s].tolist()]
                )
    with open(genemap_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["locus", "gene"])
        for name, j in zip(ds.locus_names, ds.locus_gene):
            writer.writerow([name, ds.gene_names[j]])
    if env_path is not None and ds.env_dim > 0:
        with open(env_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["subject", *[f"cov_{c + 1}" for c in range(ds.env_dim)]])
            for i, sid in enumerate(ds.subject_ids):
                writer.writerow([sid, *[repr(float(v)) for v in ds.environment[i]]])


def allele_count_stats(ds: GenotypeDataset) -> np.ndarray:
    """Per-subject minor-allele counts summed over chromosomes, (N, R) in 0..2."""
    return ds.genotypes.sum(axis=2).astype(np.int16)
