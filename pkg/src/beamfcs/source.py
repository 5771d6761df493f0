"""Master-equation particle source.

Particles are created in a fixed wave function ``phi`` at strength ``lam``
and then move freely.  The one-particle generator is
``T = -iH + lam |phi><phi|`` and

    hatsigma(t) = 2 lam int_0^t e^{sT} |phi><phi| e^{sT^H} ds.

For long times the state becomes stationary with blocks
``4 pi lam |S(E)|^2 |phi_E><phi_E|``, ``S = 1/(1 - lam gcheck)``, where

    gcheck(E) = pi |phi(E)|^2 + i PV int |phi(E')|^2 / (E' - E) dE'

is the boundary value of the Laplace transform of ``<e^{-itH} phi|phi>``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad_vec, solve_ivp

from . import _kernels
from .arrival import DilationData, DirectIntegralSpace
from .beam import StationaryState
from .errors import GridTooCoarse, IntegratorFailure, PoleCrossing, ValidationError
from .linalg import HermitianPSD, as_statistics, psd_factor
from .quasifree import QuasiFreeSource

STABILITY_MARGIN = 1e-6
POLE_GUARD = 1e6
COND_LIMIT = 1e8
PV_SELFTEST_TOL = 1e-3

PROFILES = ("lorentzian", "gaussian", "table")


def profile_density(E, profile: str, E0: float = 0.0, alpha: float = 1.0, table=None) -> np.ndarray:
    """Unnormalized spectral density ``|phi(E)|^2`` of a named family.

    ``lorentzian`` has full width ``alpha``; ``gaussian`` has standard
    deviation ``alpha``; ``table`` interpolates ``(E, density)`` rows
    linearly (zero outside the table).
    """
    E = np.asarray(E, dtype=float)
    if profile == "lorentzian":
        a = alpha / 2
        return (a / np.pi) / ((E - E0) ** 2 + a * a)
    if profile == "gaussian":
        return np.exp(-0.5 * ((E - E0) / alpha) ** 2) / (np.sqrt(2 * np.pi) * alpha)
    if profile == "table":
        if table is None:
            raise ValidationError("table profile needs data")
        tab = load_table(table) if isinstance(table, (str, bytes)) or hasattr(table, "__fspath__") else np.asarray(table, float)
        if np.any(tab[:, 1] < 0):
            raise ValidationError("table density must be non-negative")
        return np.interp(E, tab[:, 0], tab[:, 1], left=0.0, right=0.0)
    raise ValidationError(f"unknown spectral profile {profile!r}")


def load_table(path) -> np.ndarray:
    """Two-column text table ``E  density`` (``#`` comments allowed)."""
    tab = np.loadtxt(path, ndmin=2)
    if tab.shape[1] != 2 or tab.shape[0] < 2:
        raise ValidationError("spectral table needs two columns and at least two rows")
    if np.any(np.diff(tab[:, 0]) <= 0):
        raise ValidationError("table energies must be strictly increasing")
    return tab


@dataclass(frozen=True, eq=False)
class SourceSpec:
    """Creation wave function (per-node vectors), strength and profile tag."""

    space: DirectIntegralSpace
    phi: tuple
    lam: float
    profile: str = "table"

    def __post_init__(self):
        phi = tuple(np.asarray(p, dtype=complex).reshape(d) for p, d in zip(self.phi, self.space.mult))
        if len(phi) != self.space.n_nodes:
            raise ValidationError("need one phi vector per node")
        object.__setattr__(self, "phi", phi)
        if not self.lam > 0:
            raise ValidationError("source strength must be positive")
        nrm = self.density @ self.space.weights
        if abs(nrm - 1.0) > 1e-10:
            raise ValidationError(f"phi must be normalized, norm^2 = {nrm:.12g}")

    @classmethod
    def from_profile(cls, space, profile, E0=0.0, alpha=1.0, lam=1.0, table=None, component=0):
        """Normalized ``phi`` with density from a named profile in one component."""
        rho = profile_density(space.nodes, profile, E0, alpha, table)
        rho = rho * (space.mult > component)
        tot = rho @ space.weights
        if not tot > 0:
            raise ValidationError("profile has no weight on the grid")
        rho = rho / tot
        phi = []
        for r, d in zip(rho, space.mult):
            v = np.zeros(d, dtype=complex)
            if d > component:
                v[component] = np.sqrt(r)
            phi.append(v)
        return cls(space, tuple(phi), float(lam), profile)

    @property
    def density(self) -> np.ndarray:
        return np.array([np.vdot(p, p).real for p in self.phi])

    def with_lambda(self, lam: float) -> SourceSpec:
        return SourceSpec(self.space, self.phi, float(lam), self.profile)

    def coords(self) -> np.ndarray:
        return self.space.to_coords(self.phi)


def _derivative(f: np.ndarray, h: float) -> np.ndarray:
    # sixth-order central stencil inside, second order at the ends; the
    # diagonal term w_k f'(E_k) is what limits the PV quadrature otherwise
    out = np.gradient(f, h, edge_order=2)
    if f.size >= 7:
        out[3:-3] = (
            -f[:-6] + 9 * f[1:-5] - 45 * f[2:-4] + 45 * f[4:-2] - 9 * f[5:-1] + f[6:]
        ) / (60 * h)
    return out


def _pv(space: DirectIntegralSpace, rho: np.ndarray) -> np.ndarray:
    E = space.nodes
    dE = space.spacing
    drho = _derivative(rho, dE)
    out = _kernels.pv_sum(E, space.weights, rho, drho)
    lo, hi = E[0], E[-1]
    dist_lo = np.maximum(E - lo, dE / 2)
    dist_hi = np.maximum(hi - E, dE / 2)
    return out + rho * np.log(dist_hi / dist_lo)


def pv_selftest(space: DirectIntegralSpace) -> float:
    """Largest paired PV sum of a constant density at interior nodes.

    The subtracted sum must vanish identically; anything else flags a
    broken quadrature.
    """
    c = np.ones(space.n_nodes)
    s = _kernels.pv_sum(space.nodes, space.weights, c, np.zeros_like(c))
    return float(np.max(np.abs(s[1:-1]))) if s.size > 2 else 0.0


def hilbert_gamma(space: DirectIntegralSpace, density, check: bool = True) -> np.ndarray:
    """``pi rho(E) + i PV int rho(E')/(E' - E) dE'`` at the nodes.

    Uniform grids only.  The PV integral subtracts ``rho(E)`` under the
    integral (the difference quotient is smooth) and adds the exact
    ``rho(E) log((E_max - E)/(E - E_min))``.

    Raises
    ------
    GridTooCoarse
        If the constant-density self-test fails, or the error estimated by
        comparison with the half-resolution grid exceeds ``1e-3`` of the
        result's size.
    """
    if not space.is_uniform():
        raise ValidationError("principal-value quadrature needs a uniform grid")
    rho = np.asarray(density, dtype=float)
    pv = _pv(space, rho)
    if check:
        if pv_selftest(space) > 1e-8:
            raise GridTooCoarse("principal-value self-test failed")
        if space.n_nodes >= 9:
            m = space.n_nodes if space.n_nodes % 2 else space.n_nodes - 1
            sub = DirectIntegralSpace.uniform(space.nodes[0], space.nodes[m - 1], (m + 1) // 2)
            coarse = _pv(sub, rho[:m:2])
            # the end nodes carry the genuine log divergence of a cut-off integral;
            # with fourth-order convergence the fine-grid error is about gap/15
            err = np.max(np.abs(coarse - pv[:m:2])[1:-1]) / 15.0
            if err > PV_SELFTEST_TOL * max(np.max(np.abs(pv)), np.max(np.pi * rho)):
                raise GridTooCoarse(f"principal value not resolved (coarse/fine gap {err:.3e})")
    return np.pi * rho + 1j * pv


def gamma_check(spec: SourceSpec) -> np.ndarray:
    return hilbert_gamma(spec.space, spec.density)


def _winding(z: np.ndarray) -> int:
    # close the curve through the asymptotic value 1 at both ends
    zz = np.concatenate([[1.0], z, [1.0]])
    return int(np.round(np.sum(np.angle(zz[1:] / zz[:-1])) / (2 * np.pi)))


def resolvent_factor(gcheck: np.ndarray, lam: float) -> np.ndarray:
    """``S(E) = 1/(1 - lam gcheck(E))`` with the stability checks.

    Raises
    ------
    PoleCrossing
        If ``|1 - lam gcheck|`` drops below the margin, ``|S|`` exceeds the
        pole guard, or the curve ``1 - lam gcheck`` winds around zero (the
        pole has moved into the unstable half plane).
    """
    z = 1.0 - lam * gcheck
    if np.min(np.abs(z)) <= STABILITY_MARGIN or np.max(1 / np.abs(z)) >= POLE_GUARD:
        raise PoleCrossing(f"1 - lam*gcheck comes within {np.min(np.abs(z)):.3e} of zero")
    if _winding(z) != 0:
        raise PoleCrossing("source strength beyond the stability limit")
    return 1.0 / z


def _stationary_density(gcheck, rho, lam):
    S = resolvent_factor(gcheck, lam)
    return 4 * np.pi * lam * np.abs(S) ** 2 * rho


def stationary_sigma(spec: SourceSpec, statistics="bose", gcheck=None) -> StationaryState:
    """Long-time stationary state ``4 pi lam |S(E)|^2 |phi_E><phi_E|``."""
    g = gamma_check(spec) if gcheck is None else gcheck
    S = resolvent_factor(g, spec.lam)
    fac = 4 * np.pi * spec.lam * np.abs(S) ** 2
    blocks = [c * np.outer(p, p.conj()) for c, p in zip(fac, spec.phi)]
    stats = as_statistics(statistics)
    if stats.s < 0:
        top = max((np.linalg.eigvalsh(b)[-1] for b in blocks if b.size), default=0.0)
        if top >= 1.0:
            raise ValidationError("stationary blocks reach 1: not a valid Fermi state")
    return StationaryState(spec.space, blocks, stats)


def rate_for_lambda(spec: SourceSpec, lam: float, gcheck=None) -> float:
    g = gamma_check(spec) if gcheck is None else gcheck
    return float(spec.space.weights @ _stationary_density(g, spec.density, lam) / (2 * np.pi))


def lambda_for_rate(spec: SourceSpec, rate: float, gcheck=None, rtol: float = 1e-13) -> float:
    """Source strength giving the stationary rate ``rate``.

    The rate grows monotonically with ``lam`` up to the stability limit; we
    bisect, treating unstable strengths as too large.
    """
    if not rate > 0:
        raise ValidationError("rate must be positive")
    g = gamma_check(spec) if gcheck is None else gcheck
    rho = spec.density
    w = spec.space.weights

    def excess(lam):
        try:
            return w @ _stationary_density(g, rho, lam) / (2 * np.pi) - rate
        except PoleCrossing:
            return np.inf

    lo, hi = 0.0, rate / 2
    while excess(hi) < 0:
        lo, hi = hi, 2 * hi
        if hi > 1e12:
            raise PoleCrossing("rate not reachable")
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if excess(mid) < 0:
            lo = mid
        else:
            hi = mid
    lam = 0.5 * (lo + hi)
    if not np.isfinite(excess(lam)):
        raise PoleCrossing("rate is only reached at the stability limit")
    return lam


def chi_tau(state: StationaryState, dil: DilationData, tau, detector="+"):
    """``chi(tau) = sum_i w_i e^{-i tau E_i} tr G V_i hs_i V_i^H``.

    ``chi(0) = 2 pi gamma_x``; the normalized correlation is
    ``1 + |chi(tau)|^2 / chi(0)^2`` (see :func:`g2_from_chi`).
    """
    space = state.space
    tau = np.asarray(tau, dtype=float)
    if np.size(tau) and np.max(np.abs(tau)) > space.alias_time() * (1 + 1e-12):
        from .errors import AliasRisk

        raise AliasRisk(f"tau beyond pi/dE = {space.alias_time():.4g}")
    G = dil.effect_operator(detector)
    dens = np.array([np.trace(G @ v @ b @ v.conj().T).real if b.size else 0.0 for v, b in zip(dil.V, state.blocks)])
    return np.exp(-1j * np.multiply.outer(tau, space.nodes)) @ (space.weights * dens)


def g2_from_chi(chi) -> np.ndarray:
    chi = np.asarray(chi)
    c0 = chi.ravel()[0].real
    return 1.0 + np.abs(chi) ** 2 / c0**2


def boltzmann_reference(spec: SourceSpec, tau) -> np.ndarray:
    """Weak-source (``lam -> 0``) correlation: ``S = 1`` in the spectrum."""
    space = spec.space
    tau = np.asarray(tau, dtype=float)
    chi = np.exp(-1j * np.multiply.outer(tau, space.nodes)) @ (space.weights * spec.density)
    return 1.0 + np.abs(chi) ** 2 / (space.weights @ spec.density) ** 2


def generator_matrix(spec: SourceSpec) -> np.ndarray:
    """``T = -i diag(E) + lam u u^H`` in weighted coordinates."""
    u = spec.coords()
    return -1j * np.diag(spec.space.coord_energy).astype(complex) + spec.lam * np.outer(u, u.conj())


def _sigma_eigen(T, u, lam, t):
    Lam, X = np.linalg.eig(T)
    if np.linalg.cond(X) > COND_LIMIT:
        return None
    y = np.linalg.solve(X, u)
    z = Lam[:, None] + Lam.conj()[None, :]
    zt = z * t
    small = np.abs(zt) < 1e-8
    Phi = np.where(small, t * (1 + zt / 2), np.expm1(zt) / np.where(small, 1.0, z))
    return 2 * lam * X @ (np.outer(y, y.conj()) * Phi) @ X.conj().T


def _sigma_ode(T, u, lam, t):
    n = u.size

    def rhs(_, v):
        z = v[:n] + 1j * v[n:]
        dz = T @ z
        return np.concatenate([dz.real, dz.imag])

    sol = solve_ivp(rhs, (0.0, t), np.concatenate([u.real, u.imag]), method="DOP853",
                    rtol=1e-10, atol=1e-12, dense_output=True)
    if not sol.success:
        raise IntegratorFailure(f"propagation failed: {sol.message}")

    def integrand(s):
        v = sol.sol(s)
        z = v[:n] + 1j * v[n:]
        return np.outer(z, z.conj()).ravel()

    val, err = quad_vec(integrand, 0.0, t, epsabs=1e-12, epsrel=1e-10)
    if not np.all(np.isfinite(val)) or err > 1e-6 * max(1.0, np.max(np.abs(val))):
        raise IntegratorFailure(f"time integral did not converge (error {err:.3e})")
    return 2 * lam * val.reshape(n, n)


def finite_time_sigma(spec: SourceSpec, t: float, s_shift: float = 0.0, statistics="bose",
                      dilation: DilationData | None = None, method: str = "auto") -> QuasiFreeSource:
    """State created during ``[0, t]``, then evolved freely for ``s_shift``.

    ``e^{sT}`` is handled through the eigendecomposition of ``T``, which
    makes the time integral elementary:
    ``hatsigma(t) = 2 lam X [(y y^H) o Phi] X^H`` with ``y = X^{-1} u`` and
    ``Phi_kl = (e^{t(L_k + conj L_l)} - 1)/(L_k + conj L_l)``.  When the
    eigenbasis is ill conditioned an ODE propagation with adaptive
    quadrature is used instead.

    Raises
    ------
    IntegratorFailure
        If the fallback integration does not converge.
    """
    if t < 0 or s_shift < 0:
        raise ValidationError("times must be non-negative")
    space = spec.space
    n = space.dim
    if t == 0:
        return QuasiFreeSource(np.zeros((n, 0)), statistics, space=space, dilation=dilation)
    T = generator_matrix(spec)
    u = spec.coords()
    sig = None
    if method in ("auto", "eigen"):
        sig = _sigma_eigen(T, u, spec.lam, t)
        if sig is None and method == "eigen":
            raise IntegratorFailure("eigenbasis of the generator is ill conditioned")
    if sig is None:
        sig = _sigma_ode(T, u, spec.lam, t)
    if s_shift:
        D = np.exp(1j * space.coord_energy * s_shift)
        sig = D[:, None] * sig * D.conj()[None, :]
    # Hermitian by construction; remove the rounding asymmetry explicitly
    sig = HermitianPSD(0.5 * (sig + sig.conj().T))
    return QuasiFreeSource(psd_factor(sig), statistics, space=space, dilation=dilation)
