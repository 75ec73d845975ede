import numpy as np
import pytest

from epimix.errors import DataError
from epimix.oracle import (
    brute_force_posterior,
    exact_crp_partition_probs,
    partition_of_labels,
)


class TestBruteForce:
    def test_single_unit_conjugate_closed_form(self):
        # one success in one trial, Beta(1,1): posterior mean 2/3
        out = brute_force_posterior([[1]], trials=1, m_components=1, grid=401)
        assert out.unit_freq[0, 0] == pytest.approx(2 / 3, abs=1e-6)

    def test_symmetric_data_symmetric_marginals(self):
        success = np.array([[1], [1]])
        out = brute_force_posterior(success, trials=2, m_components=2)
        assert np.allclose(out.allocation_marginals, 0.5)
        assert out.cocluster[0, 1] == out.cocluster[1, 0]

    def test_grid_refinement_converges(self):
        success = np.array([[2, 0], [0, 2], [1, 1]])
        coarse = brute_force_posterior(success, 2, 2, grid=101)
        fine = brute_force_posterior(success, 2, 2, grid=201)
        assert np.max(np.abs(coarse.unit_freq - fine.unit_freq)) < 1e-4
        assert np.max(np.abs(coarse.cocluster - fine.cocluster)) < 1e-4

    def test_budget_enforced(self):
        with pytest.raises(DataError, match="budget"):
            brute_force_posterior(np.zeros((20, 3), int), 2, 3, grid=101)

    def test_deterministic(self):
        success = np.array([[2], [0]])
        a = brute_force_posterior(success, 2, 2)
        b = brute_force_posterior(success, 2, 2)
        assert np.array_equal(a.cocluster, b.cocluster)
        assert a.log_evidence == b.log_evidence


class TestExactCrp:
    def test_single_customer(self):
        out = exact_crp_partition_probs(1, alpha=1.0)
        assert out == {((0,),): pytest.approx(1.0)}

    def test_two_customers_alpha_one(self):
        out = exact_crp_partition_probs(2, alpha=1.0)
        assert out[((0, 1),)] == pytest.approx(0.5)
        assert out[((0,), (1,))] == pytest.approx(0.5)

    @pytest.mark.parametrize("n", [3, 5, 6, 8])
    @pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
    def test_normalization(self, n, alpha):
        out = exact_crp_partition_probs(n, alpha)
        assert sum(out.values()) == pytest.approx(1.0, abs=1e-12)

    def test_partition_counts_are_bell_numbers(self):
        bell = {1: 1, 2: 2, 3: 5, 4: 15, 5: 52, 6: 203}
        for n, b in bell.items():
            assert len(exact_crp_partition_probs(n, 1.0)) == b

    def test_rejects_large_n(self):
        with pytest.raises(DataError):
            exact_crp_partition_probs(9, 1.0)


class TestPartitionOfLabels:
    def test_canonicalization(self):
        assert partition_of_labels([5, 2, 5, 9]) == ((0, 2), (1,), (3,))
        assert partition_of_labels([0, 1, 0, 2]) == ((0, 2), (1,), (3,))
