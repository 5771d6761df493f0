"""Discretized energy representation and covariant arrival-time effects.

Wave functions live on energy nodes ``E_i`` with quadrature weights ``w_i``
and a multiplicity space of dimension ``d_i`` per node.  We always work in
the weighted coordinates ``u_i = sqrt(w_i) psi(E_i)``, so the discrete inner
product is the plain Euclidean one and operators commuting with energy are
block diagonal.

An arrival-time observable is given by dilation data: per-node contractions
``V_i`` into a detector space of dimension ``K`` and a detector POVM ``G_x``
on that space.  The effect for "a click of detector x during [a, b)" then
has node blocks ``hhat(E_i - E_j) sqrt(w_i w_j) V_i^H G_x V_j``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _kernels
from .errors import GridTooCoarse, ValidationError
from .linalg import HermitianPSD

SMALL_PHASE = _kernels.SMALL_PHASE


@dataclass(frozen=True, eq=False)
class DirectIntegralSpace:
    """Energy nodes, quadrature weights and multiplicities."""

    nodes: np.ndarray
    weights: np.ndarray
    mult: np.ndarray

    def __post_init__(self):
        E = np.asarray(self.nodes, dtype=float).ravel()
        w = np.broadcast_to(np.asarray(self.weights, dtype=float), E.shape).copy()
        d = np.broadcast_to(np.asarray(self.mult), E.shape).copy()
        if E.size == 0:
            raise ValidationError("need at least one node")
        if not np.all(np.isfinite(E)) or np.any(np.diff(E) <= 0):
            raise ValidationError("nodes must be finite and strictly increasing")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValidationError("weights must be positive and finite")
        if np.any(d < 0) or np.any(d != np.round(d)):
            raise ValidationError("multiplicities must be non-negative integers")
        d = d.astype(int)
        for a in (E, w, d):
            a.setflags(write=False)
        object.__setattr__(self, "nodes", E)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "mult", d)

    @classmethod
    def uniform(cls, E_min: float, E_max: float, n: int, mult=1, rule: str = "trapezoid"):
        """Uniform grid with trapezoid (default) or rectangle weights."""
        if n < 2 or not E_max > E_min:
            raise ValidationError("uniform grid needs n >= 2 and E_max > E_min")
        E = np.linspace(E_min, E_max, n)
        dE = E[1] - E[0]
        w = np.full(n, dE)
        if rule == "trapezoid":
            w[0] = w[-1] = dE / 2
        elif rule != "rectangle":
            raise ValidationError(f"unknown quadrature rule {rule!r}")
        return cls(E, w, mult)

    @classmethod
    def single(cls, E0: float, weight: float = 1.0, mult: int = 1):
        """One node: the discrete stand-in for a sharp energy."""
        return cls(np.array([E0]), np.array([weight]), np.array([mult]))

    @property
    def n_nodes(self) -> int:
        return self.nodes.size

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.mult)])

    @property
    def dim(self) -> int:
        return int(self.offsets[-1])

    @cached_property
    def coord_node(self) -> np.ndarray:
        """Node index of every coordinate."""
        return np.repeat(np.arange(self.n_nodes), self.mult)

    @cached_property
    def coord_component(self) -> np.ndarray:
        """Position of every coordinate inside its multiplicity space."""
        return np.arange(self.dim) - self.offsets[self.coord_node]

    @property
    def coord_energy(self) -> np.ndarray:
        return self.nodes[self.coord_node]

    @property
    def coord_weight(self) -> np.ndarray:
        return self.weights[self.coord_node]

    @property
    def max_spacing(self) -> float:
        if self.n_nodes < 2:
            return 0.0
        return float(np.max(np.diff(self.nodes)))

    @property
    def spacing(self) -> float:
        """Grid step of a uniform grid."""
        if not self.is_uniform():
            raise ValidationError("grid is not uniform")
        return self.max_spacing

    def is_uniform(self, rtol: float = 1e-9) -> bool:
        if self.n_nodes < 2:
            return False
        d = np.diff(self.nodes)
        return bool(np.max(np.abs(d - d.mean())) <= rtol * d.mean())

    def alias_time(self) -> float:
        """Largest |t| resolved without aliasing, ``pi / max spacing``."""
        return np.inf if self.n_nodes < 2 else np.pi / self.max_spacing

    def block_slices(self):
        o = self.offsets
        return [slice(o[i], o[i + 1]) for i in range(self.n_nodes)]

    def to_coords(self, psi) -> np.ndarray:
        """Per-node vectors ``psi(E_i)`` to weighted coordinates."""
        return np.concatenate(
            [np.sqrt(w) * np.asarray(p, dtype=complex).reshape(d) for w, p, d in zip(self.weights, psi, self.mult)]
        )


class DilationData:
    """Contractions ``V_i`` (``K x d_i``) and a detector POVM on ``C^K``.

    Parameters
    ----------
    K_dim : int
        Dimension of the detector (multiplicity) space.
    V : sequence of arrays
        One ``K x d_i`` matrix per node, each with norm at most one.
    G : dict
        Detector label to PSD ``K x K`` effect; their sum must be ``<= 1``.
    """

    def __init__(self, space: DirectIntegralSpace, K_dim: int, V, G: dict):
        self.space = space
        self.K_dim = int(K_dim)
        Vs = []
        for i, (v, d) in enumerate(zip(V, space.mult)):
            v = np.asarray(v, dtype=complex).reshape(self.K_dim, d)
            if d and np.linalg.norm(v, 2) > 1 + 1e-12:
                raise ValidationError(f"V at node {i} is not a contraction")
            Vs.append(v)
        if len(Vs) != space.n_nodes:
            raise ValidationError("need one V per node")
        self.V = Vs
        self.G = {}
        total = np.zeros((self.K_dim, self.K_dim), dtype=complex)
        for label, g in G.items():
            gm = HermitianPSD(np.asarray(g, dtype=complex).reshape(self.K_dim, self.K_dim))
            self.G[str(label)] = gm.matrix
            total += gm.matrix
        if not self.G:
            raise ValidationError("detector POVM is empty")
        if np.linalg.eigvalsh(total)[-1] > 1 + 1e-10:
            raise ValidationError("detector effects sum to more than the identity")
        self.isometric = all(
            v.shape[1] == 0 or np.allclose(v.conj().T @ v, np.eye(v.shape[1]), atol=1e-10) for v in Vs
        )

    @cached_property
    def stacked(self) -> np.ndarray:
        """All ``V_i`` side by side: a ``K x dim`` matrix."""
        if self.space.dim == 0:
            return np.zeros((self.K_dim, 0), dtype=complex)
        return np.concatenate(self.V, axis=1)

    def effect_operator(self, detector) -> np.ndarray:
        try:
            return self.G[str(detector)]
        except KeyError:
            raise ValidationError(f"unknown detector {detector!r}") from None

    def detector_sum(self, detectors=None) -> np.ndarray:
        labels = self.G if detectors is None else [str(d) for d in detectors]
        return sum((self.effect_operator(x) for x in labels), np.zeros((self.K_dim, self.K_dim), complex))

    def non_arrival(self) -> HermitianPSD:
        """Block-diagonal ``1 - F(R)``: weight of never being detected."""
        Gs = self.detector_sum()
        blocks = [np.eye(v.shape[1]) - v.conj().T @ Gs @ v for v in self.V]
        return HermitianPSD(_block_diag(blocks, self.space.dim))


def _block_diag(blocks, dim) -> np.ndarray:
    out = np.zeros((dim, dim), dtype=complex)
    o = 0
    for b in blocks:
        k = b.shape[0]
        out[o:o + k, o:o + k] = b
        o += k
    return out


@dataclass(frozen=True, eq=False)
class TimeBandEffect:
    band: tuple
    detector: str
    matrix: HermitianPSD

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix.matrix, dtype=dtype)


def fourier_indicator(a: float, b: float, dE):
    """Fourier transform ``(1/2pi) int_a^b e^{i dE t} dt`` of a time band.

    The ``dE -> 0`` limit ``(b - a)/2pi`` is used for ``|dE| (b - a) < 1e-8``.
    """
    if not b >= a:
        raise ValidationError(f"band [{a}, {b}) is reversed")
    return _hhat(a, b, dE)


def _hhat(a, b, dE):
    # valid for reversed intervals too (sign flips), used by finite differences
    dE = np.asarray(dE, dtype=float)
    L = b - a
    x = dE * L
    small = np.abs(x) < SMALL_PHASE
    core = np.where(small, L / (2 * np.pi), np.sin(0.5 * x) / (np.pi * np.where(small, 1.0, dE)))
    out = core * np.exp(0.5j * dE * (a + b))
    return out if out.ndim else complex(out)


def effect_matrix(space: DirectIntegralSpace, dil: DilationData, a: float, b: float, G) -> np.ndarray:
    """Unchecked effect matrix for band ``[a, b)`` and detector operator ``G``.

    Accepts ``b < a`` (linear continuation in the band).
    """
    if space.dim == 0:
        return np.zeros((0, 0), dtype=complex)
    Vs = dil.stacked
    B = Vs.conj().T @ np.asarray(G, dtype=complex) @ Vs
    H = _kernels.band_matrix(space.coord_energy, np.sqrt(space.coord_weight), float(a), float(b))
    return B * H


def check_band_resolution(space: DirectIntegralSpace, a: float, b: float):
    if b > a and space.max_spacing > np.pi / (b - a) * (1 + 1e-12):
        raise GridTooCoarse(
            f"node spacing {space.max_spacing:.4g} exceeds pi/(b-a) = {np.pi / (b - a):.4g}"
        )


def assemble_effect(
    space: DirectIntegralSpace, dil: DilationData, band, detector, *, check_resolution: bool = True
) -> TimeBandEffect:
    """Effect of a click of ``detector`` during ``band = (a, b)``.

    Raises
    ------
    GridTooCoarse
        If the node spacing exceeds ``pi / (b - a)``.
    NotPSD
        If quadrature produced negativity beyond tolerance.
    """
    a, b = float(band[0]), float(band[1])
    if not (np.isfinite(a) and np.isfinite(b)) or b < a:
        raise ValidationError(f"invalid band [{a}, {b})")
    if check_resolution:
        check_band_resolution(space, a, b)
    G = dil.effect_operator(detector)
    return TimeBandEffect((a, b), str(detector), HermitianPSD(effect_matrix(space, dil, a, b, G)))


def kijowski_free_1d(space: DirectIntegralSpace) -> DilationData:
    """Reference arrival-time observable of a free particle on a line.

    ``V_E`` is the identity on the two momentum directions (``d_i = 2``);
    a node with ``d_i = 1`` carries only the positive-momentum component.
    Detector ``"+"`` counts right movers and ``"-"`` left movers.
    """
    V = []
    for E, d in zip(space.nodes, space.mult):
        if d and E < 0:
            raise ValidationError("free-particle energies must be non-negative")
        if d == 2:
            V.append(np.eye(2))
        elif d == 1:
            V.append(np.array([[1.0], [0.0]]))
        elif d == 0:
            V.append(np.zeros((2, 0)))
        else:
            raise ValidationError("free particle on a line has multiplicity at most 2")
    G = {"+": np.diag([1.0, 0.0]), "-": np.diag([0.0, 1.0])}
    return DilationData(space, 2, V, G)
