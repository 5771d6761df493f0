"""Stationary beams.

A stationary state commutes with energy, so ``hatsigma`` is a block
``hatsigma(E_i)`` per node.  Its total trace is infinite in the continuum,
but the rate ``gamma = (1/2pi) sum_i w_i tr hatsigma(E_i)`` is finite and all
window statistics come from the localized kernels of the quasifree module.
Time correlations go through the operator kernel

    S(t) = (1/2pi) sum_i w_i e^{itE_i} V_i hatsigma(E_i) V_i^H.
"""
from __future__ import annotations

import threading

import numpy as np

from . import _kernels
from .arrival import (
    DilationData,
    DirectIntegralSpace,
    _block_diag,
    effect_matrix,
    kijowski_free_1d,
)
from .errors import AliasRisk, NumericalError, ValidationError, ZeroRate
from .linalg import HermitianPSD, as_statistics, psd_factor, psd_sqrt, trace_norm
from .quasifree import CoherentSource, QuasiFreeSource


class StationaryState:
    """Per-node PSD blocks ``hatsigma(E_i)`` on a discretized space."""

    def __init__(self, space: DirectIntegralSpace, blocks, statistics="bose"):
        self.space = space
        self.statistics = as_statistics(statistics)
        bl = []
        for i, (b, d) in enumerate(zip(blocks, space.mult)):
            b = np.asarray(b, dtype=complex).reshape(d, d)
            if d:
                m = HermitianPSD(b)
                if self.statistics.s == -1 and m.eigenvalues[-1] >= 1.0:
                    raise ValidationError(f"Fermi block at node {i} is not below the identity")
                b = m.matrix
            bl.append(b)
        if len(bl) != space.n_nodes:
            raise ValidationError("need one block per node")
        self.blocks = bl

    @property
    def rate(self) -> float:
        """``gamma = (1/2pi) sum_i w_i tr hatsigma(E_i)``."""
        tr = np.array([np.trace(b).real for b in self.blocks])
        return float(self.space.weights @ tr / (2 * np.pi))

    def hatsigma_matrix(self) -> np.ndarray:
        return _block_diag(self.blocks, self.space.dim)

    def sqrt_matrix(self) -> np.ndarray:
        return _block_diag([psd_sqrt(b) if b.size else b for b in self.blocks], self.space.dim)

    def source(self, dilation: DilationData | None = None, statistics=None) -> QuasiFreeSource:
        """Quasi-free source with ``W = sqrt(hatsigma)`` (block diagonal)."""
        stats = self.statistics if statistics is None else statistics
        return QuasiFreeSource(self.sqrt_matrix(), stats, space=self.space, dilation=dilation)


class SKernel:
    """Operator correlation kernel ``S(t)`` of a stationary state."""

    def __init__(self, state: StationaryState, dil: DilationData):
        self.state = state
        self.dil = dil
        space = state.space
        K = dil.K_dim
        M = np.zeros((space.n_nodes, K, K), dtype=complex)
        for i, (v, b) in enumerate(zip(dil.V, state.blocks)):
            if b.size:
                M[i] = v @ b @ v.conj().T
        self._M = M * (space.weights / (2 * np.pi))[:, None, None]
        self._fft = None
        self._lock = threading.Lock()

    @property
    def K_dim(self) -> int:
        return self.dil.K_dim

    def _check(self, t):
        tmax = float(np.max(np.abs(t))) if np.size(t) else 0.0
        if tmax > self.state.space.alias_time() * (1 + 1e-12):
            raise AliasRisk(f"|t| = {tmax:.4g} exceeds pi/dE = {self.state.space.alias_time():.4g}")

    def evaluate(self, t) -> np.ndarray:
        """``S`` at each time in ``t``; shape ``t.shape + (K, K)``."""
        t = np.asarray(t, dtype=float)
        self._check(t)
        ph = np.exp(1j * np.multiply.outer(t, self.state.space.nodes))
        K = self.K_dim
        out = ph.reshape(-1, ph.shape[-1]) @ self._M.reshape(self._M.shape[0], K * K)
        return out.reshape(t.shape + (K, K))

    def __call__(self, t: float) -> np.ndarray:
        return self.evaluate(float(t))

    def sample_uniform(self, n_pad: int | None = None):
        """All of ``S`` on the FFT time grid of a uniform energy grid.

        Returns times in ``[-pi/dE, pi/dE)`` (ascending) and the samples.
        The result is computed once and cached.
        """
        space = self.state.space
        if not space.is_uniform():
            raise ValidationError("FFT sampling needs a uniform energy grid")
        with self._lock:
            if self._fft is None or (n_pad and self._fft[0].size != n_pad):
                n = space.n_nodes
                P = max(n_pad or 0, n)
                dE = space.spacing
                K = self.K_dim
                # sum_i M_i e^{i t_k (E_0 + i dE)} with t_k = 2 pi k / (P dE)
                F = np.fft.ifft(self._M.reshape(n, K * K), n=P, axis=0) * P
                k = np.fft.fftfreq(P, d=1.0 / P)
                t = 2 * np.pi * k / (P * dE)
                F = F * np.exp(1j * t * space.nodes[0])[:, None]
                order = np.argsort(t)
                self._fft = (t[order], F[order].reshape(P, K, K))
            return self._fft


def s_kernel(state: StationaryState, dil: DilationData) -> SKernel:
    return SKernel(state, dil)


def detector_rate(S: SKernel, G) -> float:
    """``gamma_x = tr S(0) G_x``."""
    return float(np.trace(S(0.0) @ np.asarray(G, dtype=complex)).real)


def g2_xy(S: SKernel, Gx, Gy, tau, s):
    """``1 + s/(gamma_x gamma_y) tr S(tau)^H G_x S(tau) G_y``.

    Raises
    ------
    ZeroRate
        If either detector rate vanishes.
    """
    sv = as_statistics(s).value
    Gx = np.asarray(Gx, dtype=complex)
    Gy = np.asarray(Gy, dtype=complex)
    gx, gy = detector_rate(S, Gx), detector_rate(S, Gy)
    if gx <= 1e-300 or gy <= 1e-300:
        raise ZeroRate("detector rate vanishes")
    St = S.evaluate(tau)
    term = np.einsum("...ba,bc,...cd,da->...", St.conj(), Gx, St, Gy).real
    out = 1.0 + sv * term / (gx * gy)
    return out if np.ndim(tau) else float(out)


class StationaryBeam:
    """A stationary state together with its arrival-time observable."""

    def __init__(self, state: StationaryState, dil: DilationData):
        self.state = state
        self.dil = dil
        self.S = SKernel(state, dil)

    @property
    def rate(self) -> float:
        return self.state.rate

    def source(self, statistics=None) -> QuasiFreeSource:
        return self.state.source(self.dil, statistics)

    def detector_rate(self, detector) -> float:
        return detector_rate(self.S, self.dil.effect_operator(detector))

    def g2(self, x, y, tau, s=None):
        s = self.state.statistics if s is None else s
        return g2_xy(self.S, self.dil.effect_operator(x), self.dil.effect_operator(y), tau, s)


def local_trace_bound_check(state: StationaryState, dil: DilationData, window, f, detectors=None):
    """Both sides of ``||sqrt(hs) F[f] sqrt(hs)||_1 <= ||f||_inf gamma (t2 - t1)``.

    ``f`` gives the values of the test function on equal sub-bands of the
    window.  Returns ``(lhs, rhs)``.
    """
    t1, t2 = map(float, window)
    if not t2 > t1:
        raise ValidationError("window must have positive length")
    f = np.atleast_1d(np.asarray(f, dtype=complex))
    edges = np.linspace(t1, t2, f.size + 1)
    G = dil.detector_sum(detectors)
    F = sum(fc * effect_matrix(state.space, dil, a, b, G) for fc, a, b in zip(f, edges[:-1], edges[1:]))
    R = state.sqrt_matrix()
    lhs = trace_norm(R @ F @ R) if np.any(f) else 0.0
    rhs = float(np.max(np.abs(f))) * state.rate * (t2 - t1)
    if lhs > rhs * (1 + 1e-6) + 1e-14:
        raise NumericalError(f"local trace bound violated: {lhs:.6g} > {rhs:.6g}")
    return lhs, rhs


def finite_beam_truncation(state: StationaryState, T: float, dil: DilationData | None = None,
                           statistics=None) -> QuasiFreeSource:
    """Time-windowed beam with kernel ``sqrt(hs_i) sqrt(hs_j) sin(dE T)/(pi dE)``.

    In weighted coordinates this is ``R B R`` with ``B`` the band matrix of
    ``[-T, T]`` (times the identity on each multiplicity space); ``B`` is a Gram matrix, so the result is PSD.  At
    ``T = pi/dE`` (uniform rectangle weights) the stationary ``hatsigma`` is
    recovered exactly.

    Raises
    ------
    AliasRisk
        If ``T`` exceeds ``pi / max spacing``, where the grid starts to alias.
    """
    if not T > 0:
        raise ValidationError("truncation half-width must be positive")
    space = state.space
    if T > space.alias_time() * (1 + 1e-12):
        raise AliasRisk(f"T = {T:.4g} exceeds pi/dE = {space.alias_time():.4g}")
    B = _kernels.band_matrix(space.coord_energy, np.sqrt(space.coord_weight), -float(T), float(T))
    c = space.coord_component
    B = B * (c[:, None] == c[None, :])  # identity on the multiplicity space
    W = state.sqrt_matrix() @ psd_factor(B)
    stats = state.statistics if statistics is None else statistics
    return QuasiFreeSource(W, stats, space=space, dilation=dil)


# reference beams used by the examples and checks


def plane_wave(kappa: float, E0: float, weight: float = 1.0, statistics="bose"):
    """Sharp-energy right-moving beam with rate ``kappa / 2pi``.

    Returns ``(state, dilation)`` on a one-node space; ``hatsigma`` at the
    node is ``kappa / weight``.
    """
    if not kappa > 0:
        raise ValidationError("kappa must be positive")
    space = DirectIntegralSpace.single(E0, weight, 1)
    return StationaryState(space, [np.array([[kappa / weight]])], statistics), kijowski_free_1d(space)


def plane_wave_coherent(kappa: float, E0: float, weight: float = 1.0) -> CoherentSource:
    space = DirectIntegralSpace.single(E0, weight, 1)
    return CoherentSource([np.sqrt(kappa / weight)], space=space, dilation=kijowski_free_1d(space))


def gaussian_line(kappa: float, E0: float, width: float, spacing: float, n_sigma: float = 6.0,
                  statistics="bose"):
    """Narrow Gaussian spectral line of total ``int tr hatsigma = kappa``.

    A plane wave with finite coherence time ``~1/width``, on a uniform grid
    of step ``spacing`` with rectangle weights.
    """
    half = n_sigma * width
    n = int(np.ceil(2 * half / spacing)) + 1
    E = E0 - half + spacing * np.arange(n)
    if E[0] < 0:
        raise ValidationError("line reaches negative energies")
    space = DirectIntegralSpace(E, np.full(n, spacing), np.ones(n, dtype=int))
    rho = np.exp(-0.5 * ((E - E0) / width) ** 2)
    rho *= kappa / (spacing * rho.sum())
    state = StationaryState(space, [np.array([[r]]) for r in rho], statistics)
    return state, kijowski_free_1d(space)
