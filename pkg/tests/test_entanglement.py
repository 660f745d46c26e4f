import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gcs.entanglement import (
    NullifierSpec,
    entanglement_report,
    log_negativity,
    nullifier,
    nullifier_variance,
    partial_transpose,
    ppt_test,
    symplectic_spectrum,
)
from gcs.state import GaussianState, InvalidArgument, ModeTag, symplectic_form, tensor, thermal_state, vacuum_state
from strategies import mode_counts, random_state, random_symplectic, seeds, tms_cm


class TestSpectrum:
    def test_vacuum(self):
        assert np.allclose(symplectic_spectrum(vacuum_state(3)).eigenvalues, 1.0, atol=1e-12)

    def test_thermal(self):
        assert symplectic_spectrum(thermal_state(2.5)).min == pytest.approx(2.5)

    def test_count(self):
        assert len(symplectic_spectrum(vacuum_state(4))) == 4

    @given(seeds, mode_counts)
    def test_williamson_roundtrip(self, seed, n):
        rng = np.random.default_rng(seed)
        nu = np.sort(1 + 2 * rng.random(n))
        s = random_symplectic(rng, n, 0.4)
        cm = s.T @ np.kron(np.diag(nu), np.eye(2)) @ s
        assert np.allclose(symplectic_spectrum(GaussianState(0.5 * (cm + cm.T))).eigenvalues, nu, rtol=1e-8)

    @given(seeds, mode_counts)
    def test_invariant_under_symplectic(self, seed, n):
        rng = np.random.default_rng(seed)
        st_ = random_state(rng, n)
        s = random_symplectic(rng, n, 0.3)
        cm = s.T @ st_.cm @ s
        a = symplectic_spectrum(st_).eigenvalues
        b = symplectic_spectrum(GaussianState(0.5 * (cm + cm.T))).eigenvalues
        assert np.allclose(a, b, rtol=1e-8)

    def test_rejects_asymmetric_raw_matrix(self):
        with pytest.raises(InvalidArgument):
            symplectic_spectrum(np.array([[1.0, 0.5], [0.0, 1.0]]))


class TestPartialTranspose:
    def test_flips_momentum_only(self):
        s = GaussianState(tms_cm(0.5))
        pt = partial_transpose(s, [1])
        assert pt.cm[3, 1] == -s.cm[3, 1]
        assert pt.cm[2, 0] == s.cm[2, 0]
        assert pt.party == ("m1",)

    def test_involution(self):
        s = random_state(np.random.default_rng(2), 3)
        twice = partial_transpose(GaussianState(partial_transpose(s, [0]).cm), [0])
        assert np.array_equal(twice.cm, s.cm)

    @pytest.mark.parametrize("party", [[], [0, 1]])
    def test_party_must_be_proper(self, party):
        with pytest.raises(InvalidArgument):
            partial_transpose(vacuum_state(2), party)


class TestPpt:
    @pytest.mark.parametrize("r", [0.1, 0.5, 1.0])
    def test_two_mode_squeezed(self, r):
        v = ppt_test(GaussianState(tms_cm(r)), [0])
        assert v.min_symplectic_eigenvalue == pytest.approx(np.exp(-2 * r), rel=1e-10)
        assert v.entangled and v.sufficient

    def test_log_negativity_of_two_mode_squeezed(self):
        assert log_negativity(GaussianState(tms_cm(0.7)), [0]) == pytest.approx(1.4, rel=1e-10)

    def test_product_is_separable(self):
        s = tensor(GaussianState(np.diag([4.0, 0.25]), None, (ModeTag("a"),)), vacuum_state(1))
        v = ppt_test(s, ["a"])
        assert not v.entangled
        assert log_negativity(s, ["a"]) == pytest.approx(0.0, abs=1e-12)

    @given(seeds, seeds)
    def test_random_products_never_entangled(self, a, b):
        s = tensor(random_state(np.random.default_rng(a), 1).relabel([ModeTag("u")]),
                   random_state(np.random.default_rng(b), 2))
        assert not ppt_test(s, ["u"]).entangled

    def test_multi_mode_split_warns(self):
        with pytest.warns(RuntimeWarning):
            v = ppt_test(vacuum_state(4), [0, 1])
        assert not v.sufficient

    def test_single_vs_rest_does_not_warn(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            ppt_test(vacuum_state(4), [0])
            ppt_test(vacuum_state(4), [0, 1, 2])

    def test_report(self):
        rep = entanglement_report(GaussianState(tms_cm(0.5)), [0])
        assert rep["entangled"] and rep["partition"] == [["m0"], ["m1"]]
        assert rep["nu_min"] == pytest.approx(np.exp(-1.0))


class TestNullifier:
    def test_variance(self):
        s = GaussianState(tms_cm(1.0))
        n = nullifier(s, {("m0", "x"): 1, ("m1", "x"): -1}, "epr")
        assert nullifier_variance(s, n) == pytest.approx(2 * np.exp(-2.0))

    def test_zero_coefficients_rejected(self):
        with pytest.raises(InvalidArgument):
            NullifierSpec(np.zeros(4))

    def test_length_mismatch(self):
        with pytest.raises(InvalidArgument):
            nullifier_variance(vacuum_state(2), NullifierSpec(np.ones(2)))

    @given(seeds, mode_counts, st.floats(-3, 3))
    def test_scales_quadratically(self, seed, n, a):
        s = random_state(np.random.default_rng(seed), n)
        c = np.random.default_rng(seed + 1).normal(size=2 * n)
        base = nullifier_variance(s, NullifierSpec(c))
        if a != 0:
            assert nullifier_variance(s, NullifierSpec(a * c)) == pytest.approx(a * a * base, rel=1e-9)

    def test_vacuum_uncertainty(self):
        # (x_a + p_a)/sqrt2 has unit variance on vacuum
        s = vacuum_state(1)
        n = nullifier(s, {("m0", "x"): 2**-0.5, ("m0", "p"): 2**-0.5})
        assert nullifier_variance(s, n) == pytest.approx(1.0)


def test_symplectic_form_used_consistently():
    # nu of a pure single-mode squeezed state is one
    cm = np.diag([np.e**3, np.e**-3])
    assert symplectic_spectrum(cm).min == pytest.approx(1.0)
    assert np.allclose(symplectic_form(1), [[0, 1], [-1, 0]])
