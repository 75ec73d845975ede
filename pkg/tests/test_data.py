import numpy as np
import pytest

from epimix.data import (
    GenotypeDataset,
    allele_count_stats,
    diploid_view,
    load_dataset,
    load_dosage_dataset,
    locus_permutation,
    permute_locus_labels,
    save_dataset,
)
from epimix.errors import DataError

GENOTYPE_MIN = """subject,group,chrom,rs1,rs2
s1,0,1,0,1
s1,0,2,1,1
s2,1,1,0,0
s2,1,2,1,0
"""

GENEMAP_MIN = """locus,gene
rs1,GENE_A
rs2,GENE_A
"""

ENV_MIN = """subject,cov_1
s1,0.5
s2,-1.25
"""


@pytest.fixture
def minimal_files(tmp_path):
    geno = tmp_path / "genotypes.csv"
    gmap = tmp_path / "genemap.csv"
    env = tmp_path / "env.csv"
    geno.write_text(GENOTYPE_MIN)
    gmap.write_text(GENEMAP_MIN)
    env.write_text(ENV_MIN)
    return geno, gmap, env


def make_dataset(n_subjects=6, gene_loci=(2, 3), seed=0, env_dim=0, groups=None):
    g = np.random.Generator(np.random.Philox(seed))
    total = sum(gene_loci)
    if groups is None:
        groups = np.arange(n_subjects) % 2
    return GenotypeDataset(
        subject_ids=[f"s{i}" for i in range(n_subjects)],
        groups=np.asarray(groups),
        genotypes=g.integers(0, 2, size=(n_subjects, total, 2)),
        locus_names=[f"rs{r}" for r in range(total)],
        gene_names=[f"G{j}" for j in range(len(gene_loci))],
        locus_gene=np.repeat(np.arange(len(gene_loci)), gene_loci),
        environment=g.standard_normal((n_subjects, env_dim)),
    )


class TestLoad:
    def test_minimal_wellformed(self, minimal_files):
        geno, gmap, env = minimal_files
        ds = load_dataset(geno, gmap)
        assert ds.n_genes == 1
        assert ds.gene_loci[0].size == 2
        assert ds.group_size(0) == 1 and ds.group_size(1) == 1
        assert ds.env_dim == 0

    def test_environment_joined(self, minimal_files):
        geno, gmap, env = minimal_files
        ds = load_dataset(geno, gmap, env)
        assert ds.env_dim == 1
        assert ds.environment[ds.subject_ids.index("s2"), 0] == -1.25

    def test_non_binary_genotype(self, minimal_files, tmp_path):
        _, gmap, _ = minimal_files
        bad = tmp_path / "bad.csv"
        bad.write_text(GENOTYPE_MIN.replace("s2,1,1,0,0", "s2,1,1,2,0"))
        with pytest.raises(DataError, match="non-binary genotype"):
            load_dataset(bad, gmap)

    def test_error_carries_file_and_line(self, minimal_files, tmp_path):
        _, gmap, _ = minimal_files
        bad = tmp_path / "bad.csv"
        bad.write_text(GENOTYPE_MIN.replace("s2,1,2,1,0", "s2,1,2,1,x"))
        with pytest.raises(DataError, match=r"bad\.csv:5"):
            load_dataset(bad, gmap)

    def test_locus_missing_from_gene_map(self, minimal_files, tmp_path):
        geno, _, _ = minimal_files
        gmap = tmp_path / "short_map.csv"
        gmap.write_text("locus,gene\nrs1,GENE_A\n")
        with pytest.raises(DataError, match="missing from gene map"):
            load_dataset(geno, gmap)

    def test_env_subject_not_in_genotypes(self, minimal_files, tmp_path):
        geno, gmap, _ = minimal_files
        env = tmp_path / "env_extra.csv"
        env.write_text("subject,cov_1\ns1,0.5\ns2,1.0\nghost,2.0\n")
        with pytest.raises(DataError, match="absent from genotype file"):
            load_dataset(geno, gmap, env)

    def test_missing_chromosome_row(self, minimal_files, tmp_path):
        _, gmap, _ = minimal_files
        bad = tmp_path / "bad.csv"
        bad.write_text("subject,group,chrom,rs1,rs2\ns1,0,1,0,1\n")
        with pytest.raises(DataError, match="missing chromosome"):
            load_dataset(bad, gmap)

    def test_dosage_adaptor_heterozygote_orientation(self, tmp_path):
        gmap = tmp_path / "gm.csv"
        gmap.write_text(GENEMAP_MIN)
        dosage = tmp_path / "dosage.csv"
        dosage.write_text("subject,group,rs1,rs2\ns1,0,1,2\ns2,1,0,1\n")
        ds = load_dosage_dataset(dosage, gmap)
        assert tuple(ds.genotypes[0, 0]) == (1, 0)  # het stored as (1, 0)
        assert tuple(ds.genotypes[0, 1]) == (1, 1)
        assert tuple(ds.genotypes[1, 0]) == (0, 0)


class TestRoundTrip:
    def test_serialize_load_cell_for_cell(self, tmp_path):
        ds = make_dataset(n_subjects=8, gene_loci=(2, 3), env_dim=2, seed=3)
        paths = (tmp_path / "g.csv", tmp_path / "m.csv", tmp_path / "e.csv")
        save_dataset(ds, *paths)
        back = load_dataset(*paths)
        assert back.subject_ids == ds.subject_ids
        assert np.array_equal(back.groups, ds.groups)
        assert np.array_equal(back.genotypes, ds.genotypes)
        assert np.array_equal(back.locus_gene, ds.locus_gene)
        assert np.allclose(back.environment, ds.environment)


class TestDiploidView:
    def test_identity_no_reordering(self):
        ds = make_dataset()
        ds.genotypes[2, ds.gene_loci[1][0], :] = (1, 0)
        assert diploid_view(ds, 2, 1, 0) == (1, 0)

    def test_both_minor(self):
        ds = make_dataset()
        ds.genotypes[0, 0, :] = (1, 1)
        assert diploid_view(ds, 0, 0, 0) == (1, 1)

    def test_out_of_range(self):
        ds = make_dataset()
        with pytest.raises(DataError):
            diploid_view(ds, 0, ds.n_genes, 0)


class TestPermuteLocusLabels:
    def test_singleton_genes_identity(self):
        ds = make_dataset(gene_loci=(1, 1, 1))
        out = permute_locus_labels(ds, seed=99)
        assert np.array_equal(out.genotypes, ds.genotypes)
        assert out.locus_names == ds.locus_names

    def test_same_seed_same_result(self):
        ds = make_dataset(gene_loci=(3, 4))
        a = permute_locus_labels(ds, seed=5)
        b = permute_locus_labels(ds, seed=5)
        assert np.array_equal(a.genotypes, b.genotypes)
        assert a.locus_names == b.locus_names

    def test_documented_permutation_applied(self):
        ds = make_dataset(gene_loci=(3,))
        perm = locus_permutation(ds, seed=11)[0]
        out = permute_locus_labels(ds, seed=11)
        assert np.array_equal(out.genotypes[:, np.arange(3), :],
                              ds.genotypes[:, perm, :])

    def test_column_multiset_preserved(self):
        ds = make_dataset(gene_loci=(4, 2), seed=8)
        out = permute_locus_labels(ds, seed=21)
        for j in range(ds.n_genes):
            orig = {ds.genotypes[:, r, :].tobytes() for r in ds.gene_loci[j]}
            perm = {out.genotypes[:, r, :].tobytes() for r in out.gene_loci[j]}
            assert orig == perm


class TestInvariants:
    def test_gene_allele_counts_invariant_under_subject_reorder(self):
        ds = make_dataset(n_subjects=10, gene_loci=(3, 2), seed=4)
        order = np.random.Generator(np.random.Philox(1)).permutation(10)
        shuffled = GenotypeDataset(
            subject_ids=[ds.subject_ids[i] for i in order],
            groups=ds.groups[order],
            genotypes=ds.genotypes[order],
            locus_names=ds.locus_names,
            gene_names=ds.gene_names,
            locus_gene=ds.locus_gene,
            environment=ds.environment[order],
        )
        for j in range(ds.n_genes):
            loci = ds.gene_loci[j]
            assert ds.genotypes[:, loci, :].sum() == shuffled.genotypes[:, loci, :].sum()

    def test_group_label_validation(self):
        with pytest.raises(DataError, match="group labels"):
            make_dataset(groups=np.array([0, 1, 2, 0, 1, 0]))

    def test_allele_count_stats(self):
        ds = make_dataset()
        counts = allele_count_stats(ds)
        assert counts.shape == (ds.n_subjects, ds.n_loci)
        assert counts.min() >= 0 and counts.max() <= 2

    def test_require_environment(self):
        ds = make_dataset(env_dim=0)
        with pytest.raises(DataError, match="environment required"):
            ds.require_environment()
