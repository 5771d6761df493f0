import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from beamfcs.errors import (
    BoseNormViolation,
    BranchAmbiguity,
    NotHermitian,
    NotPSD,
    SingularDeterminant,
    ValidationError,
)
from beamfcs.linalg import (
    HermitianPSD,
    Statistics,
    as_statistics,
    det_power,
    hatsigma_sqrt,
    hatsigma_to_sigma,
    log_det_power,
    operator_norm,
    psd_factor,
    sigma_to_hatsigma,
    trace_norm,
)

from conftest import cplx, rand_psd

ALL_STATS = [Statistics.bose(), Statistics.fermi(), Statistics.boltzmann(),
             Statistics.parabose(2), Statistics.parafermi(3)]
seeds = st.integers(0, 2**32 - 1)


class TestStatistics:
    @pytest.mark.parametrize("text,s", [("bose", 1), ("fermi", -1), ("boltzmann", 0),
                                        ("para:3", 1 / 3), ("para:-2", -1 / 2),
                                        ("parabose:4", 1 / 4), ("parafermi:5", -1 / 5)])
    def test_parse(self, text, s):
        assert as_statistics(text).value == pytest.approx(s, abs=0)

    @pytest.mark.parametrize("bad", ["boson", "para:0", "para:x", "parabose:-1"])
    def test_parse_rejects(self, bad):
        with pytest.raises(ValidationError):
            as_statistics(bad)

    def test_only_allowed_values(self):
        with pytest.raises(ValidationError):
            as_statistics(0.4)
        assert as_statistics(-0.25).name == "parafermi:4"

    def test_name_roundtrip(self):
        for s in ALL_STATS:
            assert as_statistics(s.name) == s


class TestHermitianPSD:
    def test_symmetrizes_rounding(self, rng):
        A = rand_psd(rng, 5)
        B = A + 1e-14 * cplx(rng, 5, 5)
        M = HermitianPSD(B).matrix
        assert np.array_equal(M, M.conj().T)

    def test_rejects_non_hermitian(self, rng):
        A = rand_psd(rng, 4)
        A[0, 1] += 1e-6
        with pytest.raises(NotHermitian):
            HermitianPSD(A)

    def test_rejects_negative_beyond_tolerance(self):
        with pytest.raises(NotPSD):
            HermitianPSD(np.diag([1.0, -1e-8]))

    def test_accepts_rounding_negativity(self):
        m = HermitianPSD(np.diag([1.0, -1e-12]))
        assert m.eigenvalues[0] == pytest.approx(-1e-12)

    def test_rejects_nonsquare_and_nonfinite(self):
        with pytest.raises(ValidationError):
            HermitianPSD(np.ones((2, 3)))
        with pytest.raises(ValidationError):
            HermitianPSD(np.array([[np.nan]]))


class TestDetPower:
    def test_zero_matrix(self):
        for s in ALL_STATS:
            assert det_power(np.zeros((4, 4)), s) == 1

    def test_rank_one_bose(self, rng):
        v = cplx(rng, 5)
        v /= np.linalg.norm(v)
        assert det_power(0.3 * np.outer(v, v.conj()), 1) == pytest.approx(1 / 0.7, rel=1e-14)

    def test_diagonal_fermi(self):
        assert det_power(np.diag([0.3, 0.5]), -1) == pytest.approx(1.95, rel=1e-14)

    def test_boltzmann_is_exp_trace(self, rng):
        A = cplx(rng, 4, 4) * 0.2
        assert det_power(A, 0) == pytest.approx(np.exp(np.trace(A)), rel=1e-14)

    def test_small_s_limit(self, rng):
        H = cplx(rng, 6, 6)
        H = H + H.conj().T
        H *= 0.45 / np.linalg.norm(H, 2)
        ref = np.exp(np.trace(H))
        plus = det_power(H, Statistics.parabose(64))
        minus = det_power(H, Statistics.parafermi(64))
        # each side differs at first order in s; the symmetric mean at second
        assert abs(plus / ref - 1) < 2e-2 and abs(minus / ref - 1) < 2e-2
        assert abs(np.sqrt(plus * minus) / ref - 1) < 1e-3

    @pytest.mark.parametrize("p", [1, 2, 3, 5])
    def test_parastatistics_integer_power(self, rng, p):
        A = rand_psd(rng, 4, norm=0.6)
        n = np.eye(4)
        assert det_power(A, Statistics.parabose(p)) == pytest.approx(
            np.linalg.det(n - A / p) ** (-p), rel=1e-12)
        assert det_power(A, Statistics.parafermi(p)) == pytest.approx(
            np.linalg.det(n + A / p) ** p, rel=1e-12)

    def test_singular(self):
        with pytest.raises(SingularDeterminant):
            det_power(np.eye(3), 1)
        with pytest.raises(SingularDeterminant):
            det_power(-np.eye(2), -1)

    def test_branch_ambiguity_bose(self):
        with pytest.raises(BranchAmbiguity):
            det_power(np.diag([2.0, 0.1]), 1)

    def test_fermi_has_no_branch_issue(self):
        # det(1 + A) with a factor -1: integer exponent, no branch to choose
        assert det_power(np.diag([-2.0, 0.0]), -1) == pytest.approx(-1.0)

    def test_log_det_power_matches(self, rng):
        A = rand_psd(rng, 5, norm=0.5)
        for s in ALL_STATS:
            assert np.exp(log_det_power(A, s)) == pytest.approx(det_power(A, s), rel=1e-14)

    def test_accepts_hermitian_psd_input(self, rng):
        A = rand_psd(rng, 5, norm=0.5)
        assert det_power(HermitianPSD(A), 1) == pytest.approx(det_power(A, 1), rel=1e-13)

    @given(seed=seeds, n=st.integers(1, 5), m=st.integers(1, 7), k=st.integers(0, 4))
    def test_det_commutation(self, seed, n, m, k):
        if n == m:
            m += 1
        rng = np.random.default_rng(seed)
        A = cplx(rng, n, m)
        B = cplx(rng, m, n)
        c = 0.4 / max(np.linalg.norm(A @ B, 2), 1e-12)
        A, B = A * np.sqrt(c), B * np.sqrt(c)
        s = ALL_STATS[k]
        assert det_power(A @ B, s) == pytest.approx(det_power(B @ A, s), rel=1e-10)


class TestSigmaMaps:
    def test_examples(self):
        for s in ALL_STATS:
            assert np.allclose(sigma_to_hatsigma(np.zeros((2, 2)), s).matrix, 0)
        assert sigma_to_hatsigma([[0.5]], 1).matrix[0, 0] == pytest.approx(1.0)
        assert sigma_to_hatsigma([[1.0]], -1).matrix[0, 0] == pytest.approx(0.5)

    def test_bose_norm_violation(self):
        with pytest.raises(BoseNormViolation):
            sigma_to_hatsigma(np.diag([1.0, 0.2]), 1)
        with pytest.raises(BoseNormViolation):
            sigma_to_hatsigma(np.diag([1 - 1e-9, 0.2]), 1)

    def test_fermi_output_below_identity(self, rng):
        h = sigma_to_hatsigma(rand_psd(rng, 6, norm=5.0), -1)
        assert h.eigenvalues[-1] < 1

    @given(seed=seeds, k=st.integers(0, 4))
    def test_roundtrip(self, seed, k):
        rng = np.random.default_rng(seed)
        s = ALL_STATS[k]
        sig = rand_psd(rng, 5, norm=0.8)
        back = hatsigma_to_sigma(sigma_to_hatsigma(sig, s), s).matrix
        assert np.max(np.abs(back - sig)) < 1e-12


class TestRootsAndNorms:
    def test_sqrt_examples(self):
        assert np.allclose(hatsigma_sqrt(np.eye(3)), np.eye(3))
        assert np.allclose(hatsigma_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-15)

    def test_sqrt_random(self, rng):
        A = rand_psd(rng, 8, norm=3.0)
        R = hatsigma_sqrt(A)
        assert np.max(np.abs(R @ R - A)) <= 1e-10 * np.linalg.norm(A, 2)
        assert np.allclose(R, R.conj().T)

    def test_factor(self, rng):
        A = rand_psd(rng, 6, rank=2)
        W = psd_factor(A)
        assert W.shape == (6, 2)
        assert np.allclose(W @ W.conj().T, A, atol=1e-13)

    def test_norms(self):
        A = np.diag([3.0, -4.0])
        assert trace_norm(A) == pytest.approx(7.0)
        assert operator_norm(A) == pytest.approx(4.0)
        assert trace_norm(np.zeros((0, 0))) == 0.0

    @given(seed=seeds, n=st.integers(1, 7))
    def test_trace_norm_domination(self, seed, n):
        rng = np.random.default_rng(seed)
        A = rand_psd(rng, n, rank=int(rng.integers(1, n + 1)))
        B = rand_psd(rng, n, rank=int(rng.integers(1, n + 1)))
        R = hatsigma_sqrt(A)
        assert np.trace(R @ B @ R).real <= trace_norm(A @ B) + 1e-12

    @given(seed=seeds, n=st.integers(1, 6), a=st.floats(0.01, 1.0), d=st.floats(1e-6, 1.0))
    def test_lipschitz_bound(self, seed, n, a, d):
        rng = np.random.default_rng(seed)
        A = cplx(rng, n, n) * a
        B = A + cplx(rng, n, n) * d
        lhs = abs(np.linalg.det(np.eye(n) + A) - np.linalg.det(np.eye(n) + B))
        rhs = trace_norm(A - B) * np.exp(trace_norm(A) + trace_norm(B) + 1)
        assert lhs <= rhs * (1 + 1e-12)
