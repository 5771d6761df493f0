"""Invariant suite behind ``beamfcs selfcheck``.

Each check returns ``(ok, detail)``.  Random trials use fixed seeds, so the
report and its hash are reproducible.
"""
from __future__ import annotations

import hashlib
import time

import numpy as np

from . import beam
from .arrival import DilationData, DirectIntegralSpace, effect_matrix, kijowski_free_1d
from .linalg import HermitianPSD, Statistics, det_power, psd_sqrt, trace_norm
from .pointproc import OutcomeGrid, PoissonGenerator, number_distribution, stationary_waiting_time_density
from .quasifree import (
    QuasiFreeGenerator,
    QuasiFreeSource,
    characteristic_function,
    factorial_generator,
    factorial_moment_2,
    mu_ell,
    weak_beam_gap,
)
from .sampler import BinnedKernel, sample
from .source import hilbert_gamma

Q_REF = float(np.sqrt(10.0))
CHECKS: dict = {}
_STATS = (Statistics.bose(), Statistics.fermi(), Statistics.boltzmann(), Statistics.parabose(3),
          Statistics.parafermi(2))


def check(name):
    def deco(fn):
        CHECKS[name] = fn
        return fn

    return deco


def _cplx(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def _psd(rng, n, rank=None, norm=1.0):
    X = _cplx(rng, n, rank or n)
    A = X @ X.conj().T
    return A * (norm / np.linalg.norm(A, 2))


def _rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def _random_state(rng, n_nodes, stats, scale):
    space = DirectIntegralSpace.uniform(5.0, 5.0 + 0.25 * (n_nodes - 1), n_nodes, mult=2, rule="rectangle")
    blocks = [_psd(rng, 2, rank=int(rng.integers(1, 3)), norm=scale * rng.uniform(0.1, 1.0))
              for _ in range(n_nodes)]
    return beam.StationaryState(space, blocks, stats)


def _random_dilation(rng, space, n_det=2):
    # a common contraction V and a random (subnormalized) POVM on C^3
    V = _cplx(rng, 3, 2)
    V /= np.linalg.norm(V, 2)
    Gs = [_psd(rng, 3, rank=int(rng.integers(1, 4))) for _ in range(n_det)]
    tot = np.linalg.norm(sum(Gs), 2)
    return DilationData(space, 3, [V] * space.n_nodes, {str(i): g / tot for i, g in enumerate(Gs)})


# ---------------------------------------------------------------------------
# operator core


@check("det-commutation")
def det_commutation():
    rng = np.random.default_rng(11)
    worst = 0.0
    for trial in range(40):
        n, m = 3 + trial % 4, 6 + trial % 3
        A = _cplx(rng, n, m)
        B = _cplx(rng, m, n)
        c = 0.4 / np.linalg.norm(A @ B, 2)
        A *= np.sqrt(c)
        B *= np.sqrt(c)
        for s in _STATS:
            worst = max(worst, _rel(det_power(A @ B, s), det_power(B @ A, s)))
    return worst <= 1e-10, f"max relative gap {worst:.2e}"


@check("det-examples")
def det_examples():
    rng = np.random.default_rng(12)
    v = _cplx(rng, 4)
    v /= np.linalg.norm(v)
    e1 = abs(det_power(0.3 * np.outer(v, v.conj()), 1) - 1 / 0.7)
    e2 = abs(det_power(np.diag([0.3, 0.5]), -1) - 1.95)
    e3 = abs(det_power(np.zeros((5, 5)), 1) - 1.0)
    H = _cplx(rng, 6, 6)
    H = H + H.conj().T
    H *= 0.45 / np.linalg.norm(H, 2)
    ref = np.exp(np.trace(H))
    # the odd-order term in s cancels in the geometric mean of s = +-1/64
    sym = np.sqrt(det_power(H, Statistics.parabose(64)) * det_power(H, Statistics.parafermi(64)))
    e4 = _rel(sym, ref)
    ok = e1 < 1e-14 and e2 < 1e-14 and e3 == 0 and e4 < 1e-3
    return ok, f"rank-one {e1:.1e}, diagonal {e2:.1e}, s->0 limit {e4:.1e}"


@check("trace-norm-domination")
def trace_norm_domination():
    rng = np.random.default_rng(13)
    worst = -np.inf
    for _ in range(50):
        n = int(rng.integers(2, 8))
        A = _psd(rng, n, rank=int(rng.integers(1, n + 1)))
        B = _psd(rng, n, rank=int(rng.integers(1, n + 1)))
        R = psd_sqrt(A)
        worst = max(worst, np.trace(R @ B @ R).real - trace_norm(A @ B))
    return worst <= 1e-12, f"max tr(sqrtA B sqrtA) - ||AB||_1 = {worst:.2e}"


@check("lipschitz-bound")
def lipschitz_bound():
    rng = np.random.default_rng(14)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 7))
        A = _cplx(rng, n, n) * rng.uniform(0.05, 0.5)
        B = A + _cplx(rng, n, n) * rng.uniform(1e-4, 0.3)
        lhs = abs(np.linalg.det(np.eye(n) + A) - np.linalg.det(np.eye(n) + B))
        rhs = trace_norm(A - B) * np.exp(trace_norm(A) + trace_norm(B) + 1)
        worst = max(worst, lhs / rhs)
    return worst <= 1.0, f"max lhs/rhs {worst:.3f}"


# ---------------------------------------------------------------------------
# quasi-free statistics


def _random_source(rng, stats, dim=6, norm=0.5):
    r = int(rng.integers(1, dim + 1))
    W = _cplx(rng, dim, r)
    W *= np.sqrt(norm) / np.linalg.norm(W, 2)
    return QuasiFreeSource(W, stats)


def _random_effects(rng, dim, k):
    Fs = [_psd(rng, dim, rank=int(rng.integers(1, dim + 1))) for _ in range(k)]
    tot = np.linalg.norm(sum(Fs), 2)
    return [F / tot for F in Fs]


@check("gauge-identity")
def gauge_identity():
    rng = np.random.default_rng(15)
    worst = 0.0
    for _ in range(30):
        for st in _STATS:
            src = _random_source(rng, st)
            Fs = _random_effects(rng, 6, 3)
            f = rng.uniform(-np.pi, np.pi, 3)
            if st.s > 0:
                f = f + 1j * rng.uniform(0, 0.5, 3)
            c = characteristic_function(src, Fs, f)
            ch = factorial_generator(src, Fs, np.expm1(1j * f))
            worst = max(worst, abs(c - ch))
    # the same identity through the generator handles of a beam
    state, dil = beam.plane_wave(2 * np.pi * 1.3, 10.0)
    grid = OutcomeGrid([0.0, 0.5, 1.0], ("+",))
    for h in (QuasiFreeGenerator(state.source(dil), grid), PoissonGenerator(grid, [[0.7], [1.1]])):
        f = np.array([[0.4], [-1.2]])
        worst = max(worst, abs(h.C(f) - h.chat(np.expm1(1j * f))))
    return worst <= 1e-10, f"max |C(f) - Chat(e^if - 1)| = {worst:.2e}"


@check("factor-invariance")
def factor_invariance():
    rng = np.random.default_rng(16)
    worst = 0.0
    for _ in range(30):
        for st in _STATS:
            src = _random_source(rng, st, dim=5)
            alt = src.with_W(psd_sqrt(src.W @ src.W.conj().T))
            Fs = _random_effects(rng, 5, 2)
            f = rng.uniform(-np.pi, np.pi, 2)
            worst = max(worst, abs(characteristic_function(src, Fs, f) - characteristic_function(alt, Fs, f)))
    return worst <= 1e-10, f"max |C_W - C_sqrt(WW*)| = {worst:.2e}"


@check("sign-law")
def sign_law():
    """Bunching for Bose, antibunching for Fermi, over 200 random trials.

    Both routes are covered: second factorial moments of random kernels and
    effects, and the beam correlation ``g2_xy`` of random stationary states
    on every detector pair.
    """
    rng = np.random.default_rng(17)
    worst_b, worst_f = np.inf, -np.inf
    for trial in range(200):
        st = Statistics.bose() if trial % 2 == 0 else Statistics.fermi()
        src = _random_source(rng, st, dim=5, norm=0.9)
        F1, F2 = _random_effects(rng, 5, 2)
        m2 = factorial_moment_2(src, F1, F2).real
        m11 = (mu_ell(src, [F1]) * mu_ell(src, [F2])).real
        d = st.value * (m2 - m11)
        state = _random_state(rng, 5, st, 0.9)
        dil = _random_dilation(rng, state.space) if trial % 4 < 2 else kijowski_free_1d(state.space)
        S = beam.SKernel(state, dil)
        tau = np.linspace(-state.space.alias_time(), state.space.alias_time(), 9)
        for x in dil.G:
            for y in dil.G:
                Gx, Gy = dil.effect_operator(x), dil.effect_operator(y)
                if beam.detector_rate(S, Gx) < 1e-12 or beam.detector_rate(S, Gy) < 1e-12:
                    continue
                g = beam.g2_xy(S, Gx, Gy, tau, st)
                if st.s > 0:
                    worst_b = min(worst_b, float(np.min(g)) - 1.0, d)
                else:
                    worst_f = max(worst_f, float(np.max(g)) - 1.0, -d)
    ok = worst_b >= -1e-10 and worst_f <= 1e-10
    return ok, f"min Bose g2-1 = {worst_b:.2e}, max Fermi g2-1 = {worst_f:.2e}"


@check("weak-beam-bound")
def weak_beam_bound():
    rng = np.random.default_rng(18)
    n = worst = 0
    for _ in range(200):
        st = _STATS[int(rng.integers(0, len(_STATS)))]
        src = _random_source(rng, st, dim=6, norm=0.2)
        Fs = _random_effects(rng, 6, 2)
        f = rng.uniform(-1.0, 1.0, 2)
        w = weak_beam_gap(src, Fs, f)
        n += 1
        if w.bound > 0:
            worst = max(worst, w.gap / w.bound)
        if not w.ok:
            return False, f"gap {w.gap:.3e} exceeds bound {w.bound:.3e}"
    return True, f"{n} trials, max gap/bound {worst:.3f}"


# ---------------------------------------------------------------------------
# beams and arrival times


@check("local-trace-bound")
def local_trace_bound():
    rng = np.random.default_rng(19)
    worst = 0.0
    for _ in range(10):
        space = DirectIntegralSpace.uniform(5.0, 5.5, 3, mult=2, rule="rectangle")
        state = beam.StationaryState(space, [_psd(rng, 2) for _ in range(3)])
        dil = kijowski_free_1d(space)
        f = _cplx(rng, 4)
        f /= np.max(np.abs(f))
        lhs, rhs = beam.local_trace_bound_check(state, dil, (0.3, 2.3), f)
        worst = max(worst, lhs / rhs)
    q = Q_REF
    state, dil = beam.plane_wave(2 * np.pi * q, 10.0)
    lhs, rhs = beam.local_trace_bound_check(state, dil, (0.0, 1.0), [1.0])
    sat = max(_rel(lhs, q), _rel(rhs, q))
    z0 = beam.local_trace_bound_check(state, dil, (0.0, 1.0), [0.0])
    ok = worst <= 1 + 1e-6 and sat <= 1e-10 and z0 == (0.0, 0.0)
    return ok, f"max lhs/rhs {worst:.3f}; plane wave lhs = rhs = q to {sat:.1e}"


@check("effect-covariance")
def effect_covariance():
    space = DirectIntegralSpace.uniform(3.0, 6.0, 25, mult=2)
    dil = kijowski_free_1d(space)
    G = dil.effect_operator("+")
    a, b, delta = 0.2, 0.9, 0.63
    F = effect_matrix(space, dil, a, b, G)
    Fd = effect_matrix(space, dil, a + delta, b + delta, G)
    D = np.exp(1j * space.coord_energy * delta)
    cov = np.max(np.abs(Fd - D[:, None] * F * D.conj()[None, :]))
    m = 0.5
    add = np.max(np.abs(effect_matrix(space, dil, a, m, G) + effect_matrix(space, dil, m, b, G) - F))
    ev = HermitianPSD(F).eigenvalues
    ok = cov <= 1e-12 and add <= 1e-12 and ev[-1] <= 1 + 1e-10
    return ok, f"covariance {cov:.1e}, additivity {add:.1e}, max eigenvalue {ev[-1]:.3f}"


@check("s-hermiticity")
def s_hermiticity():
    state, dil = beam.gaussian_line(2.0, 12.0, 0.5, 0.05)
    S = beam.SKernel(state, dil)
    tau = np.linspace(0.0, state.space.alias_time(), 33)
    herm = np.max(np.abs(S.evaluate(-tau) - np.conj(np.swapaxes(S.evaluate(tau), -1, -2))))
    t, Sf = S.sample_uniform()
    fft = np.max(np.abs(Sf[::7] - S.evaluate(t[::7])))
    rate = _rel(np.trace(S(0.0)).real, state.rate)
    ok = herm <= 1e-12 and rate <= 1e-12 and fft <= 1e-10
    return ok, f"S(-t) - S(t)^H {herm:.1e}, FFT vs direct {fft:.1e}, tr S(0) vs rate {rate:.1e}"


@check("plane-wave-numberdist")
def plane_wave_numberdist():
    from math import factorial

    q = Q_REF
    state, dil = beam.plane_wave(2 * np.pi * q, 10.0)
    grid = OutcomeGrid([0.0, 1.0], ("+",))
    Y = grid.region()
    p = number_distribution(QuasiFreeGenerator(state.source(dil), grid), Y, 60).probs[:31]
    n = np.arange(31)
    eq = np.max(np.abs(p - q**n / (1 + q) ** (n + 1)))
    pc = number_distribution(PoissonGenerator(grid, q), Y, 30, 1.0).probs
    ec = np.max(np.abs(pc - np.array([q**k * np.exp(-q) / factorial(k) for k in n])))
    return eq <= 1e-10 and ec <= 1e-10, f"geometric {eq:.1e}, Poisson {ec:.1e}"


@check("waiting-time-oracle")
def waiting_time_oracle():
    q = Q_REF
    state, dil = beam.plane_wave(2 * np.pi * q, 10.0)
    tau = np.linspace(0.0, 10.0 / q, 20)
    w = stationary_waiting_time_density(state.source(dil).void_function(["+"]), tau, 1e-3 / q)
    err = np.max(np.abs(w / (2 * q / (1 + q * tau) ** 3) - 1))
    return err <= 1e-4, f"max relative error {err:.1e}"


@check("pv-selftest")
def pv_selftest_check():
    alpha, E0, dE = 1.0, 150.0, 0.05
    space = DirectIntegralSpace.uniform(E0 - 100.0, E0 + 100.0, 4001)
    E = space.nodes
    rho = (alpha / (2 * np.pi)) / ((E - E0) ** 2 + alpha**2 / 4)
    g = hilbert_gamma(space, rho)
    sel = np.abs(E - E0) <= 10 * alpha
    # the grid covers +-100 alpha; the missing tails shift Im by ~1e-5 near E0
    ref = 1.0 / (1j * (E[sel] - E0) + alpha / 2)
    err = np.max(np.abs(g[sel] - ref) / np.abs(ref))
    re = np.max(np.abs(g.real - np.pi * rho))
    return err <= 1e-4 and re == 0.0, f"Lorentzian relative error {err:.1e} (dE = {dE})"


@check("sampler-reproducibility")
def sampler_reproducibility():
    q = 1.5
    state, dil = beam.plane_wave(2 * np.pi * q, 10.0)
    k = BinnedKernel.from_source(state.source(dil), (0.0, 1.0), 40, ["+"])
    a = sample(k, 2024, 200)
    b = sample(k, 2024, 200)
    c = sample(k, 2024, 50, start=150)
    same = np.array_equal(a.times, b.times) and np.array_equal(a.offsets, b.offsets)
    split = np.array_equal(a.times[a.offsets[150]:], c.times)
    h = hashlib.sha256(a.times.tobytes() + a.offsets.tobytes()).hexdigest()
    return same and split, f"train hash {h[:16]}"


# ---------------------------------------------------------------------------


def run_checks(filter: str | None = None, out=print):
    """Run the checks whose name contains ``filter``; returns ``(ok, results, hash)``.

    The report hash covers names, verdicts and details, in order.
    """
    results = []
    for name, fn in CHECKS.items():
        if filter and filter not in name:
            continue
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        dt = time.perf_counter() - t0
        results.append((name, bool(ok), detail))
        if out:
            out(f"{'PASS' if ok else 'FAIL'}  {name:24s} {detail}  [{dt:.2f}s]")
    digest = hashlib.sha256("\n".join(f"{n}\t{int(o)}\t{d}" for n, o, d in results).encode()).hexdigest()
    return all(o for _, o, _ in results), results, digest
