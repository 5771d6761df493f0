import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from beamfcs import beam
from beamfcs.arrival import DilationData, DirectIntegralSpace, assemble_effect, kijowski_free_1d
from beamfcs.errors import AliasRisk, ValidationError, ZeroRate
from beamfcs.linalg import Statistics
from beamfcs.pointproc import OutcomeGrid, number_distribution, void_probability
from beamfcs.quasifree import QuasiFreeGenerator, characteristic_function, factorial_moment_2, mu_ell

from conftest import Q, cplx, rand_psd

seeds = st.integers(0, 2**32 - 1)


def random_state(rng, n=4, stats="bose", scale=1.0, mult=2):
    space = DirectIntegralSpace.uniform(5.0, 5.0 + 0.3 * (n - 1), n, mult=mult, rule="rectangle")
    blocks = [rand_psd(rng, mult, rank=int(rng.integers(1, mult + 1)), norm=scale * rng.uniform(0.1, 1))
              for _ in range(n)]
    return beam.StationaryState(space, blocks, stats)


def random_dilation(rng, space, n_det=2):
    V = cplx(rng, 3, 2)
    V /= np.linalg.norm(V, 2)
    Gs = [rand_psd(rng, 3, rank=int(rng.integers(1, 4))) for _ in range(n_det)]
    tot = np.linalg.norm(sum(Gs), 2)
    return DilationData(space, 3, [V] * space.n_nodes, {str(i): g / tot for i, g in enumerate(Gs)})


class TestState:
    def test_rate(self, rng):
        s = random_state(rng)
        ref = sum(w * np.trace(b).real for w, b in zip(s.space.weights, s.blocks)) / (2 * np.pi)
        assert s.rate == pytest.approx(ref)

    def test_fermi_blocks_below_identity(self):
        sp = DirectIntegralSpace.single(5.0, 1.0, 1)
        with pytest.raises(ValidationError):
            beam.StationaryState(sp, [np.array([[1.0]])], "fermi")
        beam.StationaryState(sp, [np.array([[0.99]])], "fermi")

    def test_block_count(self):
        sp = DirectIntegralSpace.uniform(1.0, 2.0, 3)
        with pytest.raises(ValidationError):
            beam.StationaryState(sp, [np.eye(1)] * 2)

    def test_plane_wave_and_line_rates(self):
        s, _ = beam.plane_wave(3.0, 7.0)
        assert s.rate == pytest.approx(3.0 / (2 * np.pi))
        g, _ = beam.gaussian_line(3.0, 7.0, 0.1, 0.01)
        assert g.rate == pytest.approx(3.0 / (2 * np.pi), rel=1e-12)
        with pytest.raises(ValidationError):
            beam.plane_wave(-1.0, 7.0)
        with pytest.raises(ValidationError):
            beam.gaussian_line(1.0, 0.1, 0.1, 0.01)


class TestSKernel:
    def test_trace_at_zero_is_rate(self, rng):
        s = random_state(rng)
        S = beam.SKernel(s, kijowski_free_1d(s.space))
        assert np.trace(S(0.0)).real == pytest.approx(s.rate, rel=1e-13)

    def test_single_node_constant_modulus(self):
        state, dil = beam.plane_wave(2.0, 7.0, weight=0.5)
        S = beam.SKernel(state, dil)
        vals = S.evaluate(np.linspace(-50, 50, 11))
        assert np.allclose(np.abs(vals[:, 0, 0]), 2.0 / (2 * np.pi))
        assert np.allclose(vals[:, 0, 0], 2.0 / (2 * np.pi) * np.exp(1j * 7.0 * np.linspace(-50, 50, 11)))

    @given(seed=seeds)
    def test_hermiticity(self, seed):
        rng = np.random.default_rng(seed)
        s = random_state(rng)
        S = beam.SKernel(s, random_dilation(rng, s.space))
        t = rng.uniform(-s.space.alias_time(), s.space.alias_time(), 6)
        assert np.max(np.abs(S.evaluate(-t) - np.conj(np.swapaxes(S.evaluate(t), -1, -2)))) <= 1e-12

    def test_trace_bound_subnormalized(self, rng):
        s = random_state(rng)
        dil = random_dilation(rng, s.space)
        assert np.trace(beam.SKernel(s, dil)(0.0)).real <= s.rate * (1 + 1e-12)

    def test_alias_guard(self, rng):
        s = random_state(rng)
        S = beam.SKernel(s, kijowski_free_1d(s.space))
        with pytest.raises(AliasRisk):
            S.evaluate([0.0, 1.01 * s.space.alias_time()])

    def test_fft_matches_direct(self):
        state, dil = beam.gaussian_line(2.0, 12.0, 0.5, 0.05)
        S = beam.SKernel(state, dil)
        t, vals = S.sample_uniform(n_pad=512)
        assert t.size == 512 and np.all(np.diff(t) > 0)
        assert np.max(np.abs(vals - S.evaluate(t))) < 1e-12

    def test_lorentzian_decay(self):
        # |S(t)| of a Lorentzian line of full width alpha decays like e^{-alpha|t|/2}
        # dE sets the alias period 2pi/dE, X the tail mass alpha/(pi X)
        alpha, X, dE = 1.0, 5000.0, 0.1
        E0 = X + 10.0
        space = DirectIntegralSpace.uniform(E0 - X, E0 + X, int(round(2 * X / dE)) + 1, mult=1)
        rho = (alpha / (2 * np.pi)) / ((space.nodes - E0) ** 2 + alpha**2 / 4)
        kappa = 2 * np.pi
        state = beam.StationaryState(space, [np.array([[kappa * r]]) for r in rho])
        S = beam.SKernel(state, kijowski_free_1d(space))
        t = np.linspace(0, 10 / alpha, 21)
        got = np.abs(S.evaluate(t)[:, 0, 0])
        assert np.max(np.abs(got - np.exp(-alpha * t / 2))) < 1e-4


class TestRatesAndG2:
    def test_detector_rates(self, rng, plane):
        state, dil = plane
        S = beam.SKernel(state, dil)
        assert beam.detector_rate(S, dil.G["+"]) == pytest.approx(Q, rel=1e-14)
        assert beam.detector_rate(S, dil.G["-"]) == 0
        s = random_state(rng)
        d = kijowski_free_1d(s.space)
        S2 = beam.SKernel(s, d)
        assert beam.detector_rate(S2, np.eye(2)) <= s.rate * (1 + 1e-12)

    def test_rate_consistency(self, rng):
        s = random_state(rng)
        dil = random_dilation(rng, s.space, 3)
        S = beam.SKernel(s, dil)
        total = sum(beam.detector_rate(S, g) for g in dil.G.values())
        assert total == pytest.approx(sum(np.trace(S(0.0) @ g).real for g in dil.G.values()), rel=1e-12)
        src = s.source(dil)
        ell = 0.7
        F = sum(np.asarray(assemble_effect(s.space, dil, (0.0, ell), x, check_resolution=False))
                for x in dil.G)
        assert mu_ell(src, [F]).real / ell == pytest.approx(total, rel=1e-8)

    def test_thermal_single_mode_is_two(self, plane):
        state, dil = plane
        S = beam.SKernel(state, dil)
        G = dil.G["+"]
        assert beam.g2_xy(S, G, G, 0.0, 1) == pytest.approx(2.0)
        assert beam.g2_xy(S, G, G, 0.0, 0) == 1.0
        assert np.allclose(beam.g2_xy(S, G, G, np.linspace(0, 5, 6), Statistics.boltzmann()), 1.0)

    def test_decays_to_one(self):
        state, dil = beam.gaussian_line(2.0, 12.0, 0.5, 0.05)
        S = beam.SKernel(state, dil)
        G = dil.G["+"]
        assert beam.g2_xy(S, G, G, 30.0, 1) == pytest.approx(1.0, abs=1e-12)

    def test_zero_rate(self, plane):
        state, dil = plane
        S = beam.SKernel(state, dil)
        with pytest.raises(ZeroRate):
            beam.g2_xy(S, dil.G["+"], dil.G["-"], 0.0, 1)

    @given(seed=seeds, fermi=st.booleans())
    def test_sign_law(self, seed, fermi):
        rng = np.random.default_rng(seed)
        stats = Statistics.fermi() if fermi else Statistics.bose()
        s = random_state(rng, stats=stats, scale=0.95)
        dil = random_dilation(rng, s.space, 3)
        S = beam.SKernel(s, dil)
        tau = np.linspace(-s.space.alias_time(), s.space.alias_time(), 7)
        for x in dil.G.values():
            for y in dil.G.values():
                g = beam.g2_xy(S, x, y, tau, stats)
                assert np.all(stats.value * (g - 1) >= -1e-10)

    def test_matches_factorial_moment_route(self):
        # g2 over short bands approaches the point correlation of S
        state, dil = beam.gaussian_line(2 * np.pi, 12.0, 0.5, 0.05)
        src = state.source(dil)
        S = beam.SKernel(state, dil)
        G = dil.G["+"]
        d, tau = 1e-3, 0.8
        F1 = assemble_effect(state.space, dil, (0.0, d), "+")
        F2 = assemble_effect(state.space, dil, (tau, tau + d), "+")
        m2 = factorial_moment_2(src, F1, F2).real
        g = m2 / (mu_ell(src, [F1]).real * mu_ell(src, [F2]).real)
        assert g == pytest.approx(beam.g2_xy(S, G, G, tau, 1), rel=1e-5)

    def test_beam_wrapper(self, plane):
        b = beam.StationaryBeam(*plane)
        assert b.rate == pytest.approx(Q)
        assert b.detector_rate("+") == pytest.approx(Q)
        assert b.g2("+", "+", 0.0) == pytest.approx(2.0)


class TestLocalTraceBound:
    def test_zero_f(self, plane):
        assert beam.local_trace_bound_check(*plane, (0.0, 1.0), [0.0]) == (0.0, 0.0)

    def test_plane_wave_saturates(self, plane):
        lhs, rhs = beam.local_trace_bound_check(*plane, (0.0, 1.0), [1.0])
        assert lhs == pytest.approx(Q, rel=1e-13) and rhs == pytest.approx(Q, rel=1e-13)

    @given(seed=seeds)
    def test_random_three_block(self, seed):
        rng = np.random.default_rng(seed)
        s = random_state(rng, n=3)
        f = cplx(rng, 5)
        f /= np.max(np.abs(f))
        lhs, rhs = beam.local_trace_bound_check(s, kijowski_free_1d(s.space), (1.0, 3.0), f)
        assert rhs == pytest.approx(2 * s.rate)
        assert lhs <= rhs * (1 + 1e-6)

    def test_rejects_empty_window(self, plane):
        with pytest.raises(ValidationError):
            beam.local_trace_bound_check(*plane, (1.0, 1.0), [1.0])


class TestStationarity:
    def test_window_statistics_shift_invariant(self):
        state, dil = beam.gaussian_line(2 * np.pi * 1.5, 12.0, 0.5, 0.05)
        src = state.source(dil)
        out = []
        for shift in (0.0, 3.3):
            grid = OutcomeGrid(np.array([0.0, 0.4, 1.0]) + shift, ("+",))
            h = QuasiFreeGenerator(src, grid)
            Y = grid.region()
            out.append((number_distribution(h, Y, 40).probs, void_probability(h, Y),
                        h.C(np.array([[0.3], [-0.9]]))))
        (p0, v0, c0), (p1, v1, c1) = out
        assert np.max(np.abs(p0 - p1)) < 1e-8
        assert abs(v0 - v1) < 1e-8 and abs(c0 - c1) < 1e-8


class TestTruncation:
    def test_full_period_recovers_state(self, rng):
        s = random_state(rng, n=6)
        T = s.space.alias_time()
        src = beam.finite_beam_truncation(s, T)
        assert np.max(np.abs(src.hatsigma - s.hatsigma_matrix())) < 1e-12

    def test_alias_guard(self, rng):
        s = random_state(rng, n=6)
        with pytest.raises(AliasRisk):
            beam.finite_beam_truncation(s, 1.01 * s.space.alias_time())
        with pytest.raises(ValidationError):
            beam.finite_beam_truncation(s, 0.0)

    def test_psd_and_kernel(self, rng):
        s = random_state(rng, n=5)
        T = 2.0
        src = beam.finite_beam_truncation(s, T)
        H = src.hatsigma
        assert np.linalg.eigvalsh(H)[0] > -1e-12
        R = s.sqrt_matrix()
        E = s.space.coord_energy
        w = s.space.coord_weight
        d = E[:, None] - E[None, :]
        with np.errstate(invalid="ignore", divide="ignore"):
            sinc = np.where(d == 0, T / np.pi, np.sin(d * T) / (np.pi * d))
        comp = np.tile(np.arange(2), 5)
        same = comp[:, None] == comp[None, :]
        assert np.allclose(H, R @ (np.sqrt(np.outer(w, w)) * sinc * same) @ R, atol=1e-13)

    def test_convergence_on_narrow_line(self):
        state, dil = beam.gaussian_line(2 * np.pi * Q, 10.0, 0.2, np.pi / 200)
        F = assemble_effect(state.space, dil, (0.0, 1.0), "+", check_resolution=False)
        c_inf = characteristic_function(state.source(dil), [F], [1.0])
        gaps = [abs(characteristic_function(beam.finite_beam_truncation(state, T, dil), [F], [1.0]) - c_inf)
                for T in (0.25, 5.0, 10.0, 20.0, 50.0)]
        assert gaps[0] > 0.1  # the window sticks out of [-T, T]
        assert all(b < a for a, b in zip(gaps[1:], gaps[2:]))
        assert gaps[-1] < 1e-2
