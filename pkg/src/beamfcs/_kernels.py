"""Hot inner loops, each in two flavours.

Every kernel exists as a numba ``@njit`` loop and as a pure-numpy version.
The public names bound at module level follow the environment flag
``BEAMFCS_DISABLE_NUMBA``: set it to ``1`` (or leave numba uninstalled) to
run the numpy path.  Both variants stay importable through
:data:`IMPLEMENTATIONS` so tests and ``benchmarks/bench_kernels.py`` can
compare them inside one process.
"""
from __future__ import annotations

import math
import os

import numpy as np

_FLAG = os.environ.get("BEAMFCS_DISABLE_NUMBA", "").strip().lower()
_DISABLED = _FLAG not in ("", "0", "false", "no")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an optional extra
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _DISABLED

# below this |dE * L| the band transform uses its explicit small-argument limit
SMALL_PHASE = 1e-8


def _njit(fn):
    if not HAVE_NUMBA:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


# ---------------------------------------------------------------------------
# band matrix: H[i, j] = sw[i] * sw[j] * hhat_[a,b)(E[i] - E[j])


def _band_matrix_numpy(E, sw, a, b):
    L = b - a
    dE = E[:, None] - E[None, :]
    x = dE * L
    # np.sinc has its own x == 0 branch; the explicit cut mirrors the loop version
    core = np.where(np.abs(x) < SMALL_PHASE, 1.0, np.sinc(x / (2 * np.pi)))
    phase = np.exp(0.5j * dE * (a + b))
    return (L / (2 * np.pi)) * core * phase * np.outer(sw, sw)


@_njit
def _band_matrix_numba(E, sw, a, b):
    n = E.shape[0]
    L = b - a
    c = 0.5 * (a + b)
    out = np.empty((n, n), dtype=np.complex128)
    for i in range(n):
        for j in range(i, n):
            d = E[i] - E[j]
            x = d * L
            if abs(x) < SMALL_PHASE:
                core = L / (2 * math.pi)
            else:
                core = math.sin(0.5 * x) / (math.pi * d)
            v = core * sw[i] * sw[j] * complex(math.cos(d * c), math.sin(d * c))
            out[i, j] = v
            out[j, i] = v.conjugate()
    return out


# ---------------------------------------------------------------------------
# singularity-subtracted principal-value sum
#   out[k] = sum_{j != k} w[j] (rho[j] - rho[k]) / (E[j] - E[k]) + w[k] drho[k]


def _pv_sum_numpy(E, w, rho, drho):
    d = E[None, :] - E[:, None]
    np.fill_diagonal(d, 1.0)
    g = (rho[None, :] - rho[:, None]) / d
    np.fill_diagonal(g, drho)
    return g @ w


@_njit
def _pv_sum_numba(E, w, rho, drho):
    n = E.shape[0]
    out = np.empty(n)
    for k in range(n):
        acc = w[k] * drho[k]
        rk = rho[k]
        ek = E[k]
        for j in range(n):
            if j != k:
                acc += w[j] * (rho[j] - rk) / (E[j] - ek)
        out[k] = acc
    return out


# ---------------------------------------------------------------------------
# determinantal sampling from a spectral decomposition (one row per draw)
#
# u_sel[d, k] < lam[k] keeps eigenvector k in draw d; u_pick[d, i] drives the
# i-th sequential point choice.  Both variants consume the uniforms the same
# way, so a given uniform table yields the same configuration either way.


def _dpp_draws_numpy(vecs, lam, u_sel, u_pick):
    n_draws = u_sel.shape[0]
    n = vecs.shape[0]
    occ = np.zeros((n_draws, n), dtype=np.int8)
    for d in range(n_draws):
        keep = u_sel[d] < lam
        V = vecs[:, keep]
        m = V.shape[1]
        for i in range(m):
            p = np.sum(np.abs(V) ** 2, axis=1)
            cdf = np.cumsum(p)
            site = int(np.searchsorted(cdf, u_pick[d, i] * cdf[-1], side="right"))
            site = min(site, n - 1)
            occ[d, site] = 1
            if i == m - 1:
                break
            j = int(np.argmax(np.abs(V[site])))
            col = V[:, j] / V[site, j]
            V = V - np.outer(col, V[site])
            V = np.delete(V, j, axis=1)
            V, _ = np.linalg.qr(V)
    return occ


@_njit
def _dpp_draws_numba(vecs, lam, u_sel, u_pick):
    n_draws = u_sel.shape[0]
    n = vecs.shape[0]
    K = vecs.shape[1]
    occ = np.zeros((n_draws, n), dtype=np.int8)
    V = np.empty((n, K), dtype=np.complex128)
    p = np.empty(n)
    for d in range(n_draws):
        m = 0
        for k in range(K):
            if u_sel[d, k] < lam[k]:
                for r in range(n):
                    V[r, m] = vecs[r, k]
                m += 1
        total_m = m
        for i in range(total_m):
            tot = 0.0
            for r in range(n):
                acc = 0.0
                for c in range(m):
                    z = V[r, c]
                    acc += z.real * z.real + z.imag * z.imag
                p[r] = acc
                tot += acc
            target = u_pick[d, i] * tot
            run = 0.0
            site = n - 1
            for r in range(n):
                run += p[r]
                if run > target:
                    site = r
                    break
            occ[d, site] = 1
            if i == total_m - 1:
                break
            # eliminate the chosen site from the span
            j = 0
            best = -1.0
            for c in range(m):
                a = abs(V[site, c])
                if a > best:
                    best = a
                    j = c
            piv = V[site, j]
            for c in range(m):
                if c != j:
                    f = V[site, c] / piv
                    for r in range(n):
                        V[r, c] -= f * V[r, j]
            for r in range(n):
                V[r, j] = V[r, m - 1]
            m -= 1
            # modified Gram-Schmidt, twice for stability
            for _ in range(2):
                for c in range(m):
                    for c2 in range(c):
                        dot = 0.0j
                        for r in range(n):
                            dot += V[r, c2].conjugate() * V[r, c]
                        for r in range(n):
                            V[r, c] -= dot * V[r, c2]
                    nrm = 0.0
                    for r in range(n):
                        z = V[r, c]
                        nrm += z.real * z.real + z.imag * z.imag
                    nrm = math.sqrt(nrm)
                    for r in range(n):
                        V[r, c] /= nrm
    return occ


# ---------------------------------------------------------------------------
# next-click gaps: per train, clicks at t <= t_cut are triggers; the gap to
# the following click is histogrammed when it falls inside the edges.


def _next_gap_hist_numpy(times, offsets, t_cut, edges):
    n_trains = offsets.shape[0] - 1
    nb = edges.shape[0] - 1
    counts = np.zeros((n_trains, nb), dtype=np.int64)
    triggers = np.zeros(n_trains, dtype=np.int64)
    for r in range(n_trains):
        t = times[offsets[r]:offsets[r + 1]]
        trig = t <= t_cut
        triggers[r] = int(np.count_nonzero(trig))
        if t.shape[0] < 2:
            continue
        gaps = np.diff(t)[trig[:-1]]
        counts[r] = np.histogram(gaps, bins=edges)[0]
    return counts, triggers


@_njit
def _next_gap_hist_numba(times, offsets, t_cut, edges):
    n_trains = offsets.shape[0] - 1
    nb = edges.shape[0] - 1
    counts = np.zeros((n_trains, nb), dtype=np.int64)
    triggers = np.zeros(n_trains, dtype=np.int64)
    for r in range(n_trains):
        lo = offsets[r]
        hi = offsets[r + 1]
        for i in range(lo, hi):
            if times[i] > t_cut:
                break
            triggers[r] += 1
            if i + 1 < hi:
                g = times[i + 1] - times[i]
                if g >= edges[0] and g <= edges[nb]:
                    k = np.searchsorted(edges, g, side="right") - 1
                    if k == nb:
                        k = nb - 1
                    counts[r, k] += 1
    return counts, triggers


# ---------------------------------------------------------------------------
# ordered pair lags: pairs (i, j), i != j, event i on detector x, event j on
# detector y, lag t_j - t_i inside the (non-negative) edges.


def _pair_lag_hist_numpy(times, is_x, is_y, offsets, edges):
    n_trains = offsets.shape[0] - 1
    nb = edges.shape[0] - 1
    counts = np.zeros((n_trains, nb), dtype=np.int64)
    for r in range(n_trains):
        sl = slice(offsets[r], offsets[r + 1])
        t = times[sl]
        tx = t[is_x[sl]]
        ty = t[is_y[sl]]
        if tx.size == 0 or ty.size == 0:
            continue
        lag = ty[None, :] - tx[:, None]
        ix = np.flatnonzero(is_x[sl])
        iy = np.flatnonzero(is_y[sl])
        later = iy[None, :] > ix[:, None]
        valid = (ix[:, None] != iy[None, :]) & ((lag > 0) | ((lag == 0) & later))
        counts[r] = np.histogram(lag[valid], bins=edges)[0]
    return counts


@_njit
def _pair_lag_hist_numba(times, is_x, is_y, offsets, edges):
    n_trains = offsets.shape[0] - 1
    nb = edges.shape[0] - 1
    counts = np.zeros((n_trains, nb), dtype=np.int64)
    top = edges[nb]
    for r in range(n_trains):
        lo = offsets[r]
        hi = offsets[r + 1]
        for i in range(lo, hi):
            if not is_x[i]:
                continue
            for j in range(lo, hi):
                if j == i or not is_y[j]:
                    continue
                lag = times[j] - times[i]
                if lag < 0.0 or (lag == 0.0 and j < i):
                    continue
                if lag >= edges[0] and lag <= top:
                    k = np.searchsorted(edges, lag, side="right") - 1
                    if k == nb:
                        k = nb - 1
                    counts[r, k] += 1
    return counts


IMPLEMENTATIONS = {
    "band_matrix": {"numpy": _band_matrix_numpy, "numba": _band_matrix_numba},
    "pv_sum": {"numpy": _pv_sum_numpy, "numba": _pv_sum_numba},
    "dpp_draws": {"numpy": _dpp_draws_numpy, "numba": _dpp_draws_numba},
    "next_gap_hist": {"numpy": _next_gap_hist_numpy, "numba": _next_gap_hist_numba},
    "pair_lag_hist": {"numpy": _pair_lag_hist_numpy, "numba": _pair_lag_hist_numba},
}

_ACTIVE = "numba" if USE_NUMBA else "numpy"

band_matrix = IMPLEMENTATIONS["band_matrix"][_ACTIVE]
pv_sum = IMPLEMENTATIONS["pv_sum"][_ACTIVE]
dpp_draws = IMPLEMENTATIONS["dpp_draws"][_ACTIVE]
next_gap_hist = IMPLEMENTATIONS["next_gap_hist"][_ACTIVE]
pair_lag_hist = IMPLEMENTATIONS["pair_lag_hist"][_ACTIVE]


def active_backend() -> str:
    return _ACTIVE
