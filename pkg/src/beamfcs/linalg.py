"""Finite-dimensional operator toolkit.

Dense complex matrices stand in for the one-particle operators: density
operators, counting effects and the window kernels built from them.
Determinants are always taken through eigenvalues and a sum of logarithms.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np

from .errors import (
    BoseNormViolation,
    BranchAmbiguity,
    NotHermitian,
    NotPSD,
    SingularDeterminant,
    ValidationError,
)

HERMITIAN_TOL = 1e-12
PSD_TOL = 1e-10
SINGULAR_TOL = 1e-12
BOSE_MARGIN = 1e-8


@dataclass(frozen=True)
class Statistics:
    """Symmetry parameter ``s`` of the particle statistics.

    ``+1`` Bose, ``-1`` Fermi, ``0`` Boltzmann, ``+1/p`` parabose and
    ``-1/p`` parafermi of order ``p``.
    """

    s: Fraction

    def __post_init__(self):
        s = Fraction(self.s)
        object.__setattr__(self, "s", s)
        if s != 0 and (s.numerator not in (1, -1) or abs(s) > 1):
            raise ValidationError(f"statistics parameter must be 0 or +-1/p, got {s}")

    @classmethod
    def bose(cls) -> Statistics:
        return cls(Fraction(1))

    @classmethod
    def fermi(cls) -> Statistics:
        return cls(Fraction(-1))

    @classmethod
    def boltzmann(cls) -> Statistics:
        return cls(Fraction(0))

    @classmethod
    def parabose(cls, p: int) -> Statistics:
        return cls(Fraction(1, _order(p)))

    @classmethod
    def parafermi(cls, p: int) -> Statistics:
        return cls(Fraction(-1, _order(p)))

    @classmethod
    def parse(cls, text: str) -> Statistics:
        """Parse ``bose``, ``fermi``, ``boltzmann``, ``para:p``, ``parabose:p``
        or ``parafermi:p``.  In ``para:p`` a negative order selects parafermi."""
        key = text.strip().lower()
        simple = {"bose": cls.bose, "fermi": cls.fermi, "boltzmann": cls.boltzmann}
        if key in simple:
            return simple[key]()
        name, _, order = key.partition(":")
        try:
            p = int(order)
        except ValueError:
            raise ValidationError(f"unknown statistics {text!r}") from None
        if name == "parabose":
            return cls.parabose(p)
        if name == "parafermi":
            return cls.parafermi(p)
        if name == "para" and p != 0:
            return cls.parabose(p) if p > 0 else cls.parafermi(-p)
        raise ValidationError(f"unknown statistics {text!r}")

    @property
    def value(self) -> float:
        return float(self.s)

    @property
    def name(self) -> str:
        if self.s == 1:
            return "bose"
        if self.s == -1:
            return "fermi"
        if self.s == 0:
            return "boltzmann"
        kind = "parabose" if self.s > 0 else "parafermi"
        return f"{kind}:{abs(self.s.denominator)}"

    def __float__(self):
        return float(self.s)


def _order(p) -> int:
    if int(p) != p or p < 1:
        raise ValidationError(f"parastatistics order must be a positive integer, got {p}")
    return int(p)


def as_statistics(s) -> Statistics:
    if isinstance(s, Statistics):
        return s
    if isinstance(s, str):
        return Statistics.parse(s)
    return Statistics(Fraction(s).limit_denominator(10**6))


class HermitianPSD:
    """A certified Hermitian positive-semidefinite matrix.

    The input is symmetrised once as ``(A + A^H) / 2``; asymmetry above
    ``1e-12`` of the largest entry or an eigenvalue below ``-1e-10`` of the
    spectral norm is rejected rather than clipped.
    """

    __slots__ = ("matrix", "__dict__")

    def __init__(self, matrix, *, tol: float = PSD_TOL):
        A = np.array(matrix, dtype=complex, copy=True)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValidationError(f"expected a square matrix, got shape {A.shape}")
        if not np.all(np.isfinite(A)):
            raise ValidationError("matrix has non-finite entries")
        scale = np.max(np.abs(A)) if A.size else 0.0
        asym = np.max(np.abs(A - A.conj().T)) if A.size else 0.0
        if asym > HERMITIAN_TOL * scale:
            raise NotHermitian(f"asymmetry {asym:.3e} exceeds {HERMITIAN_TOL:g} x {scale:.3e}")
        A = 0.5 * (A + A.conj().T)
        A.setflags(write=False)
        self.matrix = A
        ev = self.eigenvalues
        if ev.size and ev[0] < -tol * max(abs(ev[0]), abs(ev[-1])):
            raise NotPSD(f"minimum eigenvalue {ev[0]:.3e} below tolerance")

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        """Ascending real eigenvalues."""
        if self.matrix.size == 0:
            return np.zeros(0)
        return np.linalg.eigvalsh(self.matrix)

    @cached_property
    def eigh(self):
        return np.linalg.eigh(self.matrix)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def norm(self) -> float:
        ev = self.eigenvalues
        return float(max(abs(ev[0]), abs(ev[-1]))) if ev.size else 0.0

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)

    def __repr__(self):
        return f"HermitianPSD(dim={self.dim}, trace={self.trace:.6g}, norm={self.norm:.6g})"


def _matrix(A) -> np.ndarray:
    if isinstance(A, HermitianPSD):
        return A.matrix
    return np.asarray(A, dtype=complex)


def _eigs(A):
    if isinstance(A, HermitianPSD):
        return A.eigenvalues.astype(complex)
    M = np.asarray(A, dtype=complex)
    if M.size == 0:
        return np.zeros(0, dtype=complex)
    return np.linalg.eigvals(M)


def log_det_power(A, s) -> complex:
    """``-(1/s) * sum_j log(1 - s*lam_j)`` over the eigenvalues of ``A``.

    Principal branch per eigenvalue; ``tr A`` for ``s = 0``.
    """
    stats = as_statistics(s)
    if stats.s == 0:
        return complex(np.trace(_matrix(A))) if np.size(_matrix(A)) else 0j
    lam = _eigs(A)
    if lam.size == 0:
        return 0j
    sv = stats.value
    z = 1.0 - sv * lam
    scale = max(1.0, float(np.max(np.abs(lam))))
    if np.min(np.abs(z)) <= SINGULAR_TOL * scale:
        raise SingularDeterminant(
            f"1 - s*A is singular (min |1 - s*lambda| = {np.min(np.abs(z)):.3e})"
        )
    if sv > 0:
        on_cut = (z.real < 0) & (np.abs(z.imag) <= SINGULAR_TOL * np.abs(z))
        if np.any(on_cut):
            raise BranchAmbiguity("a factor 1 - s*lambda lies on the negative real axis")
    return complex(-np.sum(np.log(z)) / sv)


def det_power(A, s) -> complex:
    """Generating determinant ``exp(-(1/s) tr log(1 - s A))``.

    For ``s = +-1`` this is ``det(1 - sA)^(-s)``; for ``s = 0`` it is the
    limit ``exp(tr A)``.  For parastatistics ``s = +-1/p`` the exponent
    ``-1/s`` is the integer ``-+p``, so the result does not depend on the
    logarithm branch.

    Raises
    ------
    SingularDeterminant
        If ``1 - sA`` is numerically singular.
    BranchAmbiguity
        For ``s > 0`` when a factor ``1 - s*lambda`` sits on the negative
        real axis, i.e. a Bose kernel eigenvalue beyond ``1/s``.
    """
    return complex(np.exp(log_det_power(A, s)))


def _eigh_psd(A):
    M = A if isinstance(A, HermitianPSD) else HermitianPSD(A)
    lam, U = M.eigh
    return np.clip(lam, 0.0, None), U


def sigma_to_hatsigma(sigma, s) -> HermitianPSD:
    """``sigma (1 - s sigma)^{-1}`` by eigendecomposition."""
    stats = as_statistics(s)
    lam, U = _eigh_psd(sigma)
    sv = stats.value
    if sv > 0 and lam.size and sv * lam[-1] >= 1.0 - BOSE_MARGIN:
        raise BoseNormViolation(f"need s*||sigma|| < 1 - {BOSE_MARGIN:g}, got {sv * lam[-1]:.6g}")
    hat = lam / (1.0 - sv * lam)
    return HermitianPSD((U * hat) @ U.conj().T)


def hatsigma_to_sigma(hatsigma, s) -> HermitianPSD:
    """Inverse map ``hatsigma (1 + s hatsigma)^{-1}``."""
    stats = as_statistics(s)
    lam, U = _eigh_psd(hatsigma)
    sv = stats.value
    if sv < 0 and lam.size and -sv * lam[-1] >= 1.0:
        raise ValidationError("Fermi hatsigma must be strictly below the identity")
    return HermitianPSD((U * (lam / (1.0 + sv * lam))) @ U.conj().T)


def psd_sqrt(A) -> np.ndarray:
    """Hermitian PSD square root."""
    lam, U = _eigh_psd(A)
    return (U * np.sqrt(lam)) @ U.conj().T


hatsigma_sqrt = psd_sqrt


def psd_factor(A, rtol: float = 1e-14) -> np.ndarray:
    """Thin factor ``W`` with ``W W^H = A``, dropping eigenvalues below
    ``rtol * ||A||``."""
    lam, U = _eigh_psd(A)
    if lam.size == 0:
        return np.zeros((0, 0), dtype=complex)
    keep = lam > rtol * max(lam[-1], 0.0)
    return U[:, keep] * np.sqrt(lam[keep])


def trace_norm(A) -> float:
    M = _matrix(A)
    if M.size == 0:
        return 0.0
    return float(np.sum(np.linalg.svd(M, compute_uv=False)))


def operator_norm(A) -> float:
    M = _matrix(A)
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))
