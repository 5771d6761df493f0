"""Counting statistics of quasi-free and coherent states.

A quasi-free source is fixed by an operator ``W`` with ``W W^H = hatsigma``
and the statistics parameter ``s``.  For effects ``F_c`` and a step test
function ``f`` the characteristic function is

    C(f) = det(1 - s W^H F[e^{if} - 1] W)^(-1/s)

so every statistic reduces to the small matrices ``K_c = W^H F_c W``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import product

import numpy as np

from .arrival import DilationData, DirectIntegralSpace, check_band_resolution, effect_matrix
from .errors import EigenvalueOutOfRange, ValidationError, ZeroRate
from .linalg import (
    HermitianPSD,
    as_statistics,
    det_power,
    log_det_power,
    operator_norm,
    psd_factor,
    trace_norm,
)
from .pointproc import (
    GeneratorHandle,
    OutcomeGrid,
    PoissonGenerator,
    _Cache,
    convolve_eigen_laws,
    eigen_law_pmf,
)


def _eff(F) -> np.ndarray:
    return np.asarray(F, dtype=complex)


class QuasiFreeSource:
    """Quasi-free state through a factor ``W`` of ``hatsigma``.

    Parameters
    ----------
    W : array, shape (dim, r)
        Any factor with ``W W^H = hatsigma``.
    statistics : Statistics, str or number
    space, dilation : optional
        Needed only to assemble time-band effects on demand.
    """

    def __init__(self, W, statistics, *, space: DirectIntegralSpace | None = None,
                 dilation: DilationData | None = None):
        W = np.array(W, dtype=complex)
        if W.ndim == 1:
            W = W[:, None]
        if W.ndim != 2 or not np.all(np.isfinite(W)):
            raise ValidationError("W must be a finite matrix")
        W.setflags(write=False)
        self.W = W
        self.statistics = as_statistics(statistics)
        if self.statistics.s == -1 and W.size and operator_norm(W) >= 1.0:
            raise ValidationError("Fermi source needs ||W|| < 1")
        self.space = space
        self.dilation = dilation

    @classmethod
    def from_hatsigma(cls, hatsigma, statistics, **kw):
        return cls(psd_factor(hatsigma), statistics, **kw)

    @property
    def s(self) -> float:
        return self.statistics.value

    @cached_property
    def hatsigma(self) -> np.ndarray:
        return self.W @ self.W.conj().T

    def kernel(self, F) -> np.ndarray:
        """``W^H F W`` for an effect (or any operator) ``F``."""
        return self.W.conj().T @ _eff(F) @ self.W

    def band_kernel(self, a: float, b: float, detectors=None) -> np.ndarray:
        """Kernel of the band ``[a, b)`` summed over ``detectors``.

        ``b < a`` is allowed and gives the linear continuation; that is what
        the waiting-time finite differences need.
        """
        if self.space is None or self.dilation is None:
            raise ValidationError("source has no space/dilation attached")
        G = self.dilation.detector_sum(detectors)
        return self.kernel(effect_matrix(self.space, self.dilation, a, b, G))

    def window_kernel(self, effects, window=None) -> WindowKernel:
        K = sum((self.kernel(F) for F in effects), np.zeros((self.W.shape[1],) * 2, complex))
        return WindowKernel(HermitianPSD(K), self.statistics, window)

    def void_function(self, detectors=None):
        """``p0(t1, t2)``: probability of no click in ``[t1, t2)``."""

        def p0(t1, t2):
            return det_power(-self.band_kernel(t1, t2, detectors), self.statistics).real

        return p0

    def with_W(self, W) -> QuasiFreeSource:
        return QuasiFreeSource(W, self.statistics, space=self.space, dilation=self.dilation)


class CoherentSource:
    """Coherent state with amplitude vector ``phi`` in weighted coordinates."""

    def __init__(self, phi, *, space=None, dilation=None):
        phi = np.array(phi, dtype=complex).ravel()
        if not np.all(np.isfinite(phi)):
            raise ValidationError("amplitude must be finite")
        phi.setflags(write=False)
        self.phi = phi
        self.space = space
        self.dilation = dilation

    def intensity(self, F) -> float:
        """``<phi|F phi>``."""
        return float(np.real(self.phi.conj() @ _eff(F) @ self.phi))

    def void_function(self, detectors=None):
        def p0(t1, t2):
            G = self.dilation.detector_sum(detectors)
            mu = self.phi.conj() @ effect_matrix(self.space, self.dilation, t1, t2, G) @ self.phi
            return float(np.exp(-mu.real))

        return p0


@dataclass(frozen=True, eq=False)
class WindowKernel:
    """Hermitian PSD kernel ``W^H F[chi_window] W`` with cached spectrum."""

    matrix: HermitianPSD
    statistics: object
    window: object = None

    def __post_init__(self):
        stats = as_statistics(self.statistics)
        object.__setattr__(self, "statistics", stats)
        ev = self.matrix.eigenvalues
        if stats.s < 0 and ev.size and ev[-1] > abs(stats.s.denominator) * (1 + 1e-10):
            raise EigenvalueOutOfRange(f"kernel eigenvalue {ev[-1]:.6g} too large for {stats.name}")

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.clip(self.matrix.eigenvalues, 0.0, None)

    def count_distribution(self, n_max: int, tail_tol: float = 1e-6):
        return convolve_eigen_laws(self.eigenvalues, self.statistics, n_max, tail_tol)

    def void_probability(self) -> float:
        return det_power(-self.matrix.matrix, self.statistics).real


def _check_f(stats, f):
    f = np.asarray(f, dtype=complex)
    if stats.s > 0 and np.any(f.imag < 0):
        raise ValidationError("Bose characteristic function needs Im f >= 0")
    return f


def characteristic_function(src: QuasiFreeSource, effects, f) -> complex:
    """``C(f)`` for ``f`` taking value ``f[c]`` on effect ``effects[c]``.

    ``C(0) = 1`` exactly.  Singular kernels propagate
    :class:`~beamfcs.errors.SingularDeterminant`.
    """
    f = _check_f(src.statistics, f)
    if not np.any(f):
        return 1.0 + 0j
    return factorial_generator(src, effects, np.expm1(1j * f))


def factorial_generator(src: QuasiFreeSource, effects, g) -> complex:
    """``Chat(g) = det(1 - s W^H F[g] W)^(-1/s)``."""
    g = np.asarray(g, dtype=complex)
    if not np.any(g):
        return 1.0 + 0j
    A = sum(gc * src.kernel(F) for gc, F in zip(g, effects) if gc != 0)
    return det_power(A, src.statistics)


def mu_ell(src: QuasiFreeSource, effects) -> complex:
    """``tr(hatsigma F_1 hatsigma F_2 ... hatsigma F_l)``."""
    if len(effects) < 1:
        raise ValidationError("need at least one effect")
    K = [src.kernel(F) for F in effects]
    P = K[0]
    for k in K[1:]:
        P = P @ k
    return complex(np.trace(P))


def factorial_moment_2(src: QuasiFreeSource, F1, F2) -> complex:
    return mu_ell(src, [F1]) * mu_ell(src, [F2]) + src.s * mu_ell(src, [F1, F2])


def factorial_moment_3(src: QuasiFreeSource, F1, F2, F3) -> complex:
    """Third factorial moment from the cycle expansion.

    The two 3-cycles carry ``s**2``, which makes the Boltzmann case a plain
    product of first moments.
    """
    m = [mu_ell(src, [F]) for F in (F1, F2, F3)]
    pairs = (
        mu_ell(src, [F1, F2]) * m[2] + mu_ell(src, [F1, F3]) * m[1] + mu_ell(src, [F2, F3]) * m[0]
    )
    s = src.s
    return m[0] * m[1] * m[2] + s * pairs + 2 * s * s * mu_ell(src, [F1, F2, F3]).real


def factorial_moment_cauchy(src: QuasiFreeSource, effects, n_points: int = 8) -> complex:
    """Mixed derivative of ``Chat(sum_a t_a F_a)`` at zero, by Cauchy's formula.

    An independent route to the factorial moments: a ``k``-dimensional torus
    of sample points, reduced with an FFT.
    """
    K = [src.kernel(F) for F in effects]
    k = len(K)
    scale = sum(operator_norm(x) for x in K)
    r = 0.1 / scale if scale > 0 else 1.0
    z = r * np.exp(2j * np.pi * np.arange(n_points) / n_points)
    vals = np.empty((n_points,) * k, dtype=complex)
    for idx in product(range(n_points), repeat=k):
        A = sum(z[i] * x for i, x in zip(idx, K))
        vals[idx] = det_power(A, src.statistics)
    coef = np.fft.fftn(vals) / n_points**k
    return complex(coef[(1,) * k] / r**k)


def g_n(src: QuasiFreeSource, effects) -> float:
    """Normalized correlation of order 2 or 3 for (small) effects."""
    n = len(effects)
    if n not in (2, 3):
        raise ValidationError("order must be 2 or 3")
    m1 = [mu_ell(src, [F]).real for F in effects]
    if min(m1) <= 1e-300:
        raise ZeroRate("first moment vanishes")
    mk = factorial_moment_2(src, *effects) if n == 2 else factorial_moment_3(src, *effects)
    return float(mk.real / np.prod(m1))


def coherent_characteristic(src: CoherentSource, effects, f) -> complex:
    f = np.asarray(f, dtype=complex)
    if not np.any(f):
        return 1.0 + 0j
    return complex(np.exp(sum(np.expm1(1j * fc) * src.intensity(F) for fc, F in zip(f, effects))))


def beta(h: float) -> float:
    """``-1 - log(1 - h)/h``, with the small-``h`` limit ``h/2``."""
    if h >= 1:
        return np.inf
    if h < 1e-8:
        return 0.5 * h
    return float(-1.0 - np.log1p(-h) / h)


@dataclass(frozen=True)
class WeakBeamGap:
    gap: float
    bound: float

    @property
    def ok(self) -> bool:
        return self.gap <= self.bound * (1 + 1e-9) + 1e-15


def weak_beam_gap(src: QuasiFreeSource, effects, f) -> WeakBeamGap:
    """Distance between ``log C_s(f)`` and its Boltzmann value.

    With ``A = W^H F[e^{if}-1] W`` the gap is ``|log C_s - tr A|`` and the
    bound ``||A||_1 beta(|s| ||A||)``.
    """
    f = _check_f(src.statistics, f)
    g = np.expm1(1j * f)
    A = sum(gc * src.kernel(F) for gc, F in zip(g, effects))
    if np.isscalar(A) or src.statistics.s == 0:
        return WeakBeamGap(0.0, 0.0)
    gap = abs(log_det_power(A, src.statistics) - np.trace(A))
    bound = trace_norm(A) * beta(abs(src.s) * operator_norm(A))
    return WeakBeamGap(float(gap), float(bound))


def chaotic_consistency(alphas, n_max: int, tail_tol: float = 1e-6):
    """Convolution of per-mode geometric laws with means ``alphas``."""
    a = np.asarray(alphas, dtype=float)
    if np.any(a < 0):
        raise ValidationError("occupations must be non-negative")
    return convolve_eigen_laws(a, 1, n_max, tail_tol)


class QuasiFreeGenerator(GeneratorHandle):
    """Generating functional of a quasi-free source on an outcome grid."""

    def __init__(self, src: QuasiFreeSource, grid: OutcomeGrid, *, check_resolution: bool = True):
        super().__init__(grid)
        if src.space is None or src.dilation is None:
            raise ValidationError("source has no space/dilation attached")
        for x in grid.detectors:
            src.dilation.effect_operator(x)
        if check_resolution:
            for a, b in grid.bands():
                check_band_resolution(src.space, a, b)
        self.src = src
        self._cache = _Cache()

    def cell_kernel(self, ib: int, ix: int) -> np.ndarray:
        a, b = self.grid.bands()[ib]
        det = self.grid.detectors[ix]

        def build():
            K = self.src.band_kernel(a, b, [det])
            K.setflags(write=False)
            return K

        return self._cache.get((ib, ix), build)

    def _combine(self, g) -> np.ndarray:
        r = self.src.W.shape[1]
        A = np.zeros((r, r), dtype=complex)
        for (ib, ix), gc in np.ndenumerate(g):
            if gc != 0:
                A += gc * self.cell_kernel(ib, ix)
        return A

    def chat(self, g) -> complex:
        g = self.grid.test_function(g)
        if not np.any(g):
            return 1.0 + 0j
        return det_power(self._combine(g), self.src.statistics)

    def region_kernel(self, Y) -> WindowKernel:
        return WindowKernel(HermitianPSD(self._combine(np.asarray(Y, dtype=float))), self.src.statistics, Y)

    def exact_count_distribution(self, Y, n_max: int):
        return eigen_law_pmf(self.region_kernel(Y).eigenvalues, self.src.statistics, n_max)


def coherent_generator(src: CoherentSource, grid: OutcomeGrid) -> PoissonGenerator:
    mu = np.zeros(grid.shape)
    for ib, (a, b) in enumerate(grid.bands()):
        for ix, x in enumerate(grid.detectors):
            G = src.dilation.effect_operator(x)
            mu[ib, ix] = src.intensity(effect_matrix(src.space, src.dilation, a, b, G))
    return PoissonGenerator(grid, np.clip(mu, 0.0, None))
