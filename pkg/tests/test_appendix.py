import csv
import io

import numpy as np
import pytest

from gcs import appendix as ap
from gcs import symplectic as sp
from gcs.state import GaussianState, validate_state

KAPPAS = ap.APPENDIX_KAPPAS


class TestReferenceMatrices:
    def test_shapes(self):
        assert ap.reference_matrix("s_int1", 0.8).shape == (8, 8)
        assert ap.reference_matrix("sigma_fin", 0.8).shape == (4, 4)
        with pytest.raises(KeyError):
            ap.reference_matrix("nope", 0.5)

    @pytest.mark.parametrize("k", KAPPAS)
    def test_reference_covariances_symmetric(self, k):
        for name in ("sigma_out", "sigma_fin"):
            m = ap.reference_matrix(name, k)
            assert np.array_equal(m, m.T)

    @pytest.mark.parametrize("k", KAPPAS)
    def test_reference_interaction_matrices_not_symplectic(self, k):
        # the reference interaction matrices fail S^T Omega S = Omega
        assert sp.symplectic_residual(ap.reference_matrix("s_int1", k)) > 0.5
        assert sp.symplectic_residual(ap.reference_matrix("s_int2", k)) > 0.5

    def test_reference_s_int2_determinant(self):
        assert np.linalg.det(ap.reference_matrix("s_int2", 0.8)) == pytest.approx(0.2, abs=1e-12)

    @pytest.mark.parametrize("k,expected", [(0.5, -0.2306), (0.8, -1.2712), (1.0, -2.5649)])
    def test_reference_final_matrix_unphysical(self, k, expected):
        rep = validate_state(GaussianState(ap.reference_matrix("sigma_fin", k)))
        assert not rep.passed
        assert rep.min_eigenvalue == pytest.approx(expected, abs=1e-4)

    @pytest.mark.parametrize("k", KAPPAS)
    def test_reference_sigma_out_physical(self, k):
        rep = validate_state(GaussianState(ap.reference_matrix("sigma_out", k)))
        assert rep.min_eigenvalue > -1e-9


class TestOracle:
    @pytest.mark.parametrize("k", KAPPAS + (0.0, 1.7))
    def test_pipeline_matches_oracle(self, k):
        assert np.max(np.abs(ap.computed_matrix("sigma_fin", k) - ap.oracle_sigma_fin(k))) < 1e-12

    @pytest.mark.parametrize("k", KAPPAS)
    def test_sigma_out_matches_oracle(self, k):
        assert np.max(np.abs(ap.computed_matrix("sigma_out", k) - ap.oracle_sigma_out(k))) < 1e-12

    def test_oracle_precision_independent(self):
        a = ap.oracle_sigma_fin(0.8, dps=30)
        b = ap.oracle_sigma_fin(0.8, dps=60)
        assert np.max(np.abs(a - b)) < 1e-15


class TestDiagnostics:
    @pytest.mark.parametrize("k", KAPPAS)
    def test_reference_sigma_out_is_exchanged_frame(self, k):
        assert np.max(np.abs(ap.exchanged_frame_sigma_out(k) - ap.reference_matrix("sigma_out", k))) < 1e-12

    @pytest.mark.parametrize("k,expected", [(0.5, 0.7522), (0.8, 0.6396), (1.0, 0.5774)])
    def test_conditioned_reference_nu(self, k, expected):
        assert ap.reference_pt_minimum("conditioned_sigma_out", k) == pytest.approx(expected, abs=1e-4)

    @pytest.mark.parametrize("k,expected", [(0.5, 0.6205), (0.8, 1.2717), (1.0, 1.8332)])
    def test_reference_final_nu(self, k, expected):
        assert ap.reference_pt_minimum("sigma_fin", k) == pytest.approx(expected, abs=1e-4)

    def test_unknown_diagnostic(self):
        with pytest.raises(KeyError):
            ap.reference_pt_minimum("s_int1", 0.5)


class TestReport:
    def test_verify(self):
        rep = ap.verify_appendix()
        assert rep.pipeline_matches_oracle
        assert not rep.reference_matches("sigma_fin")
        assert rep.kappas == KAPPAS
        assert len(rep.rows) == 3 * (64 + 64 + 64 + 16)
        s = rep.summary()
        assert s["pipeline_matches_oracle"] is True

    def test_rows_are_one_based_and_consistent(self):
        rows = ap.discrepancy_rows(0.8, ["sigma_fin"])
        assert (rows[0].i, rows[0].j) == (1, 1)
        assert (rows[-1].i, rows[-1].j) == (4, 4)
        for r in rows:
            assert r.delta == r.computed_value - r.paper_value

    def test_csv(self):
        text = ap.rows_to_csv(ap.discrepancy_rows(0.5, ["s_int1"]))
        rows = list(csv.reader(io.StringIO(text)))
        assert rows[0] == ap.CSV_HEADER
        assert len(rows) == 65
        assert float(rows[1][0]) == 0.5

    def test_zero_kappa_deltas(self):
        rows = {(r.matrix_name, r.i, r.j): r.delta for r in ap.discrepancy_rows(0.0)}
        # interaction matrices: every coupling-dependent entry agrees at zero coupling
        for (n, i, j), v in rows.items():
            if n.startswith("s_") and "k" in ap.REFERENCE_MATRICES[n][i - 1][j - 1]:
                assert v == 0
        # the covariance matrices do not, because of the exchanged quadrature frame
        assert rows[("sigma_out", 3, 3)] == pytest.approx(-2.0)
        assert rows[("sigma_fin", 3, 3)] == pytest.approx(-2.0)
