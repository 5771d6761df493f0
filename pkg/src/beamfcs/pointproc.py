"""Statistics of a point process given through its generating functional.

A process on a finite grid of (time bin, detector) cells is represented by a
:class:`GeneratorHandle`, which evaluates the factorial generating function
``Chat(g)``; the characteristic function follows as ``C(f) = Chat(e^{if}-1)``.
From a handle we get number distributions, void probabilities, joint count
characteristic functions and, through a two-time void function, the
waiting-time density between consecutive clicks.
"""
from __future__ import annotations

import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as _st

from .errors import (
    NonConvergent,
    NonStationary,
    OverlappingRegions,
    ValidationError,
    ZeroClickRate,
)
from .linalg import as_statistics

TAIL_TOL = 1e-6
IMAG_TOL = 1e-10


@dataclass(frozen=True)
class OutcomeGrid:
    """Time-bin edges times detector labels; one cell per (bin, detector)."""

    time_bins: np.ndarray
    detectors: tuple = ("0",)

    def __post_init__(self):
        edges = np.asarray(self.time_bins, dtype=float)
        if edges.ndim != 1 or edges.size < 2:
            raise ValidationError("need at least two bin edges")
        if not np.all(np.isfinite(edges)) or np.any(np.diff(edges) <= 0):
            raise ValidationError("bin edges must be finite and strictly increasing")
        dets = tuple(str(d) for d in self.detectors)
        if not dets:
            raise ValidationError("need at least one detector")
        if len(set(dets)) != len(dets):
            raise ValidationError("detector labels must be unique")
        edges.setflags(write=False)
        object.__setattr__(self, "time_bins", edges)
        object.__setattr__(self, "detectors", dets)

    @property
    def n_bins(self) -> int:
        return self.time_bins.size - 1

    @property
    def shape(self):
        return (self.n_bins, len(self.detectors))

    def bands(self):
        e = self.time_bins
        return list(zip(e[:-1], e[1:]))

    def region(self, bins=None, detectors=None) -> np.ndarray:
        """Boolean cell mask; ``None`` selects everything along that axis."""
        mask = np.zeros(self.shape, dtype=bool)
        bsel = slice(None) if bins is None else np.asarray(bins, dtype=int)
        if detectors is None:
            dsel = slice(None)
        else:
            try:
                dsel = [self.detectors.index(str(d)) for d in detectors]
            except ValueError:
                raise ValidationError(f"unknown detector in {detectors!r}") from None
        mask[bsel, dsel] = True
        return mask

    def test_function(self, values) -> np.ndarray:
        f = np.broadcast_to(np.asarray(values, dtype=complex), self.shape).copy()
        if not np.all(np.isfinite(f)):
            raise ValidationError("test function has non-finite values")
        return f


@dataclass(frozen=True)
class CountDistribution:
    """Probabilities ``p_0..p_nmax`` and a bound on the neglected tail mass."""

    probs: np.ndarray
    tail_bound: float = 0.0

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if np.any(p < -1e-12):
            raise ValidationError("negative probability")
        total = p.sum() + self.tail_bound
        if abs(total - 1.0) > 1e-8:
            raise ValidationError(f"probabilities sum to {total!r}")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def n_max(self) -> int:
        return self.probs.size - 1

    def mean(self) -> float:
        return float(np.arange(self.probs.size) @ self.probs)

    def factorial_moment(self, k: int) -> float:
        n = np.arange(self.probs.size, dtype=float)
        ff = np.ones_like(n)
        for j in range(k):
            ff *= n - j
        return float(ff @ self.probs)


class GeneratorHandle(ABC):
    """Evaluator of the generating functional on an :class:`OutcomeGrid`.

    Subclasses implement :meth:`chat`; they may also provide an exact count
    law through :meth:`exact_count_distribution`.  Handles are read-only
    after construction and can be shared between threads.
    """

    def __init__(self, grid: OutcomeGrid):
        self.grid = grid

    @abstractmethod
    def chat(self, g) -> complex:
        """Factorial gauge ``Chat(g)``."""

    def C(self, f) -> complex:
        f = self.grid.test_function(f)
        if not np.any(f):
            return 1.0 + 0j
        return self.chat(np.expm1(1j * f))

    def exact_count_distribution(self, Y, n_max: int):
        return None


class PoissonGenerator(GeneratorHandle):
    """Poisson process with intensity ``mu`` per cell."""

    def __init__(self, grid: OutcomeGrid, intensity):
        super().__init__(grid)
        mu = np.broadcast_to(np.asarray(intensity, dtype=float), grid.shape).copy()
        if np.any(mu < 0) or not np.all(np.isfinite(mu)):
            raise ValidationError("intensity must be finite and non-negative")
        mu.setflags(write=False)
        self.intensity = mu

    def chat(self, g) -> complex:
        g = self.grid.test_function(g)
        return complex(np.exp(np.sum(self.intensity * g)))

    def exact_count_distribution(self, Y, n_max: int):
        m = float(self.intensity[Y].sum())
        return _st.poisson.pmf(np.arange(n_max + 1), m)


def _single_law(lam: float, s, n: np.ndarray) -> np.ndarray:
    if s == 0:
        return _st.poisson.pmf(n, lam)
    p = abs(s.denominator)
    if s > 0:
        # (1 - s*lam*(z-1))^(-1/s): negative binomial with p trials
        return _st.nbinom.pmf(n, p, 1.0 / (1.0 + lam / p))
    # (1 + |s|*lam*(z-1))^p: binomial with p trials
    return _st.binom.pmf(n, p, min(lam / p, 1.0))


def eigen_law_pmf(eigenvalues, s, n_max: int) -> np.ndarray:
    """Count probabilities ``p_0..p_nmax`` of a quasi-free window kernel.

    Each eigenvalue contributes an independent factor of the generating
    function: Bernoulli (Fermi), geometric (Bose), Poisson (Boltzmann),
    binomial (parafermi) or negative binomial (parabose).  The factors are
    convolved exactly, truncated at ``n_max``.
    """
    stats = as_statistics(s)
    lam = np.asarray(eigenvalues, dtype=float)
    if np.any(lam < -1e-10 * max(1.0, np.max(np.abs(lam), initial=0.0))):
        raise ValidationError("kernel eigenvalues must be non-negative")
    lam = np.clip(lam, 0.0, None)
    if stats.s < 0:
        cap = abs(stats.s.denominator)
        if np.any(lam > cap * (1 + 1e-10)):
            raise ValidationError(f"eigenvalues above {cap} are not admissible for {stats.name}")
    n = np.arange(n_max + 1)
    if stats.s == 0:
        out = _single_law(float(lam.sum()), stats.s, n)
    else:
        out = np.zeros(n_max + 1)
        out[0] = 1.0
        for x in lam[lam > 0]:
            out = np.convolve(out, _single_law(float(x), stats.s, n))[: n_max + 1]
    return out


def convolve_eigen_laws(eigenvalues, s, n_max: int, tail_tol: float = TAIL_TOL) -> CountDistribution:
    """:func:`eigen_law_pmf` wrapped as a checked :class:`CountDistribution`."""
    return _finish(eigen_law_pmf(eigenvalues, s, n_max), tail_tol)


def _finish(p: np.ndarray, tail_tol: float) -> CountDistribution:
    tail = max(0.0, 1.0 - float(p.sum()))
    if tail > tail_tol:
        raise NonConvergent(f"tail mass {tail:.3e} beyond n_max={p.size - 1}; raise n_max")
    return CountDistribution(p, tail)


def _as_mask(grid: OutcomeGrid, Y) -> np.ndarray:
    Y = np.asarray(Y, dtype=bool)
    if Y.shape != grid.shape:
        raise ValidationError(f"region mask has shape {Y.shape}, grid is {grid.shape}")
    return Y


def number_distribution(g: GeneratorHandle, Y, n_max: int, tail_tol: float = TAIL_TOL) -> CountDistribution:
    """Distribution of the number of clicks in the cell set ``Y``.

    Uses the handle's exact law when it has one, otherwise the inverse DFT
    of ``z -> Chat((z-1) chi_Y)`` sampled at ``4 (n_max + 1)`` points of the
    unit circle.

    Raises
    ------
    NonConvergent
        If more than ``tail_tol`` probability lies beyond ``n_max``.
    """
    if n_max < 0:
        raise ValidationError("n_max must be non-negative")
    Y = _as_mask(g.grid, Y)
    if not Y.any():
        p = np.zeros(n_max + 1)
        p[0] = 1.0
        return CountDistribution(p, 0.0)
    exact = g.exact_count_distribution(Y, n_max)
    if exact is not None:
        return _finish(np.asarray(exact, dtype=float), tail_tol)
    M = 4 * (n_max + 1)
    z = np.exp(2j * np.pi * np.arange(M) / M)
    vals = np.array([g.chat(np.where(Y, zk - 1.0, 0.0)) for zk in z])
    coef = np.fft.fft(vals) / M
    if np.max(np.abs(coef.imag)) > 1e-8:
        raise NonConvergent("generating function is not a real power series on the circle")
    return _finish(coef.real[: n_max + 1], tail_tol)


def void_probability(g: GeneratorHandle, Y) -> float:
    """Probability of no click in ``Y``, ``Chat(-chi_Y)``."""
    Y = _as_mask(g.grid, Y)
    if not Y.any():
        return 1.0
    v = g.chat(np.where(Y, -1.0, 0.0))
    if abs(v.imag) > IMAG_TOL:
        raise NonConvergent(f"void probability has imaginary part {v.imag:.3e}")
    return float(v.real)


def joint_count_cf(g: GeneratorHandle, regions, lambdas) -> complex:
    """``C(sum_l lambda_l chi_l)`` for pairwise disjoint regions."""
    masks = [_as_mask(g.grid, Y) for Y in regions]
    if len(masks) != len(lambdas):
        raise ValidationError("one lambda per region required")
    used = np.zeros(g.grid.shape, dtype=int)
    for m in masks:
        used += m
    if np.any(used > 1):
        raise OverlappingRegions("regions must be pairwise disjoint")
    f = np.zeros(g.grid.shape, dtype=complex)
    for m, lam in zip(masks, lambdas):
        f[m] = lam
    return g.C(f)


def _richardson(fn, h):
    a = fn(h)
    b = fn(h / 2)
    return b + (b - a) / 3.0


def click_rate_from_void(p0, s: float, h: float) -> float:
    """``d p0 / d t1`` at ``(s, s)``: the click rate at time ``s``."""
    return _richardson(lambda k: (p0(s + k, s) - p0(s - k, s)) / (2 * k), h)


def waiting_time_density(p0, s: float, tau, h: float):
    """Density of the delay to the next click given a click at ``s``.

    ``p0(t1, t2)`` is the probability of no click in ``[t1, t2)``; it must
    accept ``t2 < t1`` (the analytic continuation of the interval formula)
    because the central differences straddle the diagonal at ``tau = 0``.

    Both derivatives use central differences at step ``h`` improved by one
    Richardson step with ``h/2``.

    Raises
    ------
    ZeroClickRate
        If the click rate at ``s`` vanishes.
    """
    if h <= 0:
        raise ValidationError("finite-difference step must be positive")
    rate = click_rate_from_void(p0, s, h)
    if abs(rate) < 1e-12:
        raise ZeroClickRate(f"no clicks at s={s}")

    def mixed(t, k):
        return (
            p0(s + k, t + k) - p0(s + k, t - k) - p0(s - k, t + k) + p0(s - k, t - k)
        ) / (4 * k * k)

    taus = np.atleast_1d(np.asarray(tau, dtype=float))
    out = np.array([-_richardson(lambda k, t=s + x: mixed(t, k), h) / rate for x in taus])
    return out if np.ndim(tau) else float(out[0])


def stationary_waiting_time_density(p0, tau, h: float, shifts=(0.0, 0.37), tol: float = 1e-6):
    """Waiting-time density of a stationary process.

    Evaluated at two click times; disagreement beyond ``tol`` (relative to
    the largest density value) raises :class:`NonStationary`.
    """
    a = np.atleast_1d(waiting_time_density(p0, shifts[0], tau, h))
    b = np.atleast_1d(waiting_time_density(p0, shifts[1], tau, h))
    scale = max(float(np.max(np.abs(a))), 1e-300)
    if np.max(np.abs(a - b)) > tol * scale:
        raise NonStationary("waiting-time density depends on the click time")
    return a if np.ndim(tau) else float(a[0])


@dataclass
class _Cache:
    """Small thread-safe memo used by handles that assemble kernels lazily."""

    store: dict = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def get(self, key, build):
        with self.lock:
            if key in self.store:
                return self.store[key]
        val = build()
        with self.lock:
            return self.store.setdefault(key, val)
