import os
import subprocess
import sys

import numpy as np
import pytest

from beamfcs import _kernels
from beamfcs._kernels import IMPLEMENTATIONS

numba_only = pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not installed")


def both(name, *args):
    return IMPLEMENTATIONS[name]["numpy"](*args), IMPLEMENTATIONS[name]["numba"](*args)


@pytest.fixture
def trains(rng):
    lens = rng.poisson(6, 50)
    offsets = np.concatenate([[0], np.cumsum(lens)]).astype(np.int64)
    times = np.concatenate([np.sort(rng.uniform(0, 3, n)) for n in lens])
    return times, offsets


def test_band_matrix_closed_form(rng):
    E = np.sort(rng.uniform(0, 5, 12))
    E[3] = E[4]  # degenerate pair takes the small-phase branch
    sw = rng.uniform(0.5, 1, 12)
    H = IMPLEMENTATIONS["band_matrix"]["numpy"](E, sw, -0.3, 1.2)
    d = E[:, None] - E[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        mod = np.where(d == 0, 1.5 / (2 * np.pi), np.abs(np.sin(d * 0.75) / (np.pi * d)))
    assert np.allclose(np.abs(H), np.outer(sw, sw) * mod, atol=1e-14)
    assert np.allclose(H, H.conj().T, atol=1e-15)


@numba_only
class TestAgreement:
    def test_band_matrix(self, rng):
        E = np.sort(rng.uniform(0, 5, 30))
        E[7] = E[8] + 1e-12
        a, b = both("band_matrix", E, rng.uniform(0.1, 1, 30), 0.4, 2.9)
        assert np.allclose(a, b, rtol=0, atol=1e-14)
        a, b = both("band_matrix", E, np.ones(30), 2.0, 1.0)
        assert np.allclose(a, b, rtol=0, atol=1e-14)

    def test_pv_sum(self, rng):
        E = np.linspace(-3, 3, 41)
        w = np.full(41, E[1] - E[0])
        rho = np.exp(-E**2)
        a, b = both("pv_sum", E, w, rho, -2 * E * rho)
        assert np.allclose(a, b, rtol=0, atol=1e-12)

    def test_dpp_draws(self, rng):
        n, k, m = 15, 6, 200
        U, _ = np.linalg.qr(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
        vecs = np.ascontiguousarray(U[:, :k])
        lam = rng.uniform(0.05, 1, k)
        u_sel, u_pick = rng.random((m, k)), rng.random((m, k))
        a, b = both("dpp_draws", vecs, lam, u_sel, u_pick)
        assert np.array_equal(a, b)
        assert np.array_equal(a.sum(axis=1), (u_sel < lam).sum(axis=1))

    def test_next_gap_hist(self, trains):
        times, offsets = trains
        a, b = both("next_gap_hist", times, offsets, 2.5, np.linspace(0, 0.5, 6))
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_pair_lag_hist(self, rng, trains):
        times, offsets = trains
        isx = rng.random(times.size) < 0.5
        a, b = both("pair_lag_hist", times, isx, ~isx, offsets, np.linspace(0, 2, 9))
        assert np.array_equal(a, b)
        a, b = both("pair_lag_hist", times, np.ones_like(isx), np.ones_like(isx), offsets, np.linspace(0, 2, 9))
        assert np.array_equal(a, b)


def test_gap_hist_by_hand():
    times = np.array([0.1, 0.3, 0.35, 0.2, 0.9])
    offsets = np.array([0, 3, 5])
    counts, trig = IMPLEMENTATIONS["next_gap_hist"]["numpy"](times, offsets, 0.32, np.array([0, 0.1, 0.3, 1.0]))
    assert trig.tolist() == [2, 1]
    assert counts.tolist() == [[1, 1, 0], [0, 0, 1]]


def test_env_flag_selects_numpy():
    env = dict(os.environ, BEAMFCS_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", "from beamfcs import _kernels; print(_kernels.active_backend())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
