"""Monte Carlo click trains from windowed kernels, and their estimators.

The window is cut into equal time bins.  Each (bin, detector mode) cell gets
one wave-packet mode, so the continuous window kernel is replaced by a
small cell kernel ``Kb``; this is accurate when the bin width is short
against the inverse spectral width of the beam.

* Fermi: determinantal sampling from the spectral decomposition of ``Kb``
  (at most one click per cell).
* Bose: a circular complex Gaussian field with covariance ``Kb`` and
  independent Poisson counts with means ``|g_c|^2``; its factorial moments
  are permanents of ``Kb``.

Click times are uniform inside their bin.  Draw ``d`` of a run with seed
``seed`` uses its own stream ``numpy.random.default_rng([seed, d])``, so any
draw can be reproduced on its own and batches can be generated in parallel.
"""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .arrival import effect_matrix
from .errors import EigenvalueOutOfRange, EmptyData, ValidationError
from .linalg import HermitianPSD, as_statistics
from .quasifree import QuasiFreeSource

BINS_PER_TIME = 20
CHUNK = 4096


@dataclass(frozen=True, eq=False)
class ClickTrain:
    """Sorted click times with detector indices inside a window."""

    times: np.ndarray
    detectors: np.ndarray
    window: tuple
    seed: int
    labels: tuple = ("0",)
    draw: int = 0

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        d = np.asarray(self.detectors, dtype=np.int64)
        if t.shape != d.shape:
            raise ValidationError("times and detectors differ in length")
        if np.any(np.diff(t) < 0):
            raise ValidationError("click times must be sorted")
        a, b = self.window
        if t.size and (t[0] < a or t[-1] > b):
            raise ValidationError("click outside the window")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "detectors", d)

    def __len__(self):
        return self.times.size

    def to_text(self) -> str:
        a, b = self.window
        lines = [
            f"# window {float(a)!r} {float(b)!r}",
            f"# seed {int(self.seed)} {int(self.draw)}",
            "# detectors " + " ".join(self.labels),
        ]
        lines += [f"{t!r}\t{self.labels[d]}" for t, d in zip(self.times.tolist(), self.detectors.tolist())]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> ClickTrain:
        window = seed = labels = None
        draw = 0
        times, dets = [], []
        for line in io.StringIO(text):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                key, *rest = line[1:].split()
                if key == "window":
                    window = (float(rest[0]), float(rest[1]))
                elif key == "seed":
                    seed, draw = int(rest[0]), int(rest[1]) if len(rest) > 1 else 0
                elif key == "detectors":
                    labels = tuple(rest)
                continue
            t, x = line.split("\t")
            times.append(float(t))
            dets.append(x)
        if window is None or seed is None:
            raise ValidationError("click-train text lacks window or seed header")
        labels = labels or tuple(sorted(set(dets))) or ("0",)
        idx = [labels.index(x) for x in dets]
        return cls(np.array(times), np.array(idx, dtype=np.int64), window, seed, labels, draw)


@dataclass(frozen=True, eq=False)
class TrainBatch:
    """Many click trains stored flat: ``times[offsets[r]:offsets[r+1]]``."""

    times: np.ndarray
    detectors: np.ndarray
    offsets: np.ndarray
    window: tuple
    seed: int
    labels: tuple

    @property
    def n_trains(self) -> int:
        return self.offsets.size - 1

    def train(self, r: int) -> ClickTrain:
        sl = slice(self.offsets[r], self.offsets[r + 1])
        return ClickTrain(self.times[sl], self.detectors[sl], self.window, self.seed, self.labels, r)

    def trains(self):
        return [self.train(r) for r in range(self.n_trains)]

    @classmethod
    def from_trains(cls, trains) -> TrainBatch:
        trains = list(trains)
        if not trains:
            raise EmptyData("no click trains")
        t0 = trains[0]
        lens = np.array([len(t) for t in trains])
        return cls(
            np.concatenate([t.times for t in trains]) if lens.sum() else np.zeros(0),
            np.concatenate([t.detectors for t in trains]) if lens.sum() else np.zeros(0, np.int64),
            np.concatenate([[0], np.cumsum(lens)]).astype(np.int64),
            t0.window,
            t0.seed,
            t0.labels,
        )


class BinnedKernel:
    """Cell kernel for sampling: one row/column per (bin, detector mode).

    Attributes
    ----------
    matrix : HermitianPSD
        ``Kb``; its diagonal is the expected count per cell.
    cell_bin, cell_detector : int arrays
        Time bin and detector index of every cell.
    edges : array
        Bin edges; all bins have equal width.
    """

    def __init__(self, matrix, cell_bin, cell_detector, edges, labels, statistics):
        self.matrix = matrix if isinstance(matrix, HermitianPSD) else HermitianPSD(matrix)
        self.cell_bin = np.asarray(cell_bin, dtype=np.int64)
        self.cell_detector = np.asarray(cell_detector, dtype=np.int64)
        self.edges = np.asarray(edges, dtype=float)
        self.labels = tuple(labels)
        self.statistics = as_statistics(statistics)
        widths = np.diff(self.edges)
        if np.max(np.abs(widths - widths[0])) > 1e-12 * widths[0]:
            raise ValidationError("time bins must have equal width")
        ev = self.matrix.eigenvalues
        if self.statistics.s == -1 and ev.size and ev[-1] > 1 + 1e-10:
            raise EigenvalueOutOfRange(f"Fermi kernel eigenvalue {ev[-1]:.6g} exceeds 1")

    @property
    def window(self):
        return (float(self.edges[0]), float(self.edges[-1]))

    @property
    def bin_width(self) -> float:
        return float(self.edges[1] - self.edges[0])

    @property
    def n_cells(self) -> int:
        return self.cell_bin.size

    def expected_counts(self) -> np.ndarray:
        return np.diag(self.matrix.matrix).real.copy()

    @classmethod
    def from_matrix(cls, matrix, window, statistics, labels=("0",)):
        """One cell per bin on a single detector; ``matrix`` is ``Kb`` itself."""
        M = np.asarray(matrix, dtype=complex)
        n = M.shape[0]
        edges = np.linspace(float(window[0]), float(window[1]), n + 1)
        return cls(M, np.arange(n), np.zeros(n, dtype=np.int64), edges, labels, statistics)

    @classmethod
    def from_source(cls, src: QuasiFreeSource, window, n_bins: int | None = None, detectors=None,
                    carrier: float | None = None, statistics=None):
        """Compress the window kernel of ``src`` to one mode per cell.

        A cell's mode in weighted coordinates is
        ``sqrt(w_i) hhat_c(E_i - E_c) sqrt(2pi/dt) V_i^H g``, with ``g`` a
        unit eigenvector (times root eigenvalue) of the detector effect and
        ``E_c`` a carrier energy; a common energy shift only changes phases
        that cancel in every statistic.

        Raises
        ------
        ValidationError
            If fewer than 20 bins per mean inter-click time are requested.
        """
        space, dil = src.space, src.dilation
        if space is None or dil is None:
            raise ValidationError("source has no space/dilation attached")
        t1, t2 = map(float, window)
        if not t2 > t1:
            raise ValidationError("window must have positive length")
        labels = tuple(dil.G) if detectors is None else tuple(str(d) for d in detectors)
        L = t2 - t1
        Gsum = dil.detector_sum(labels)
        mean = float(np.trace(src.kernel(effect_matrix(space, dil, t1, t2, Gsum))).real)
        need = int(np.ceil(BINS_PER_TIME * mean))
        if n_bins is None:
            n_bins = max(need, 1)
        elif n_bins < need:
            raise ValidationError(f"need at least {need} bins ({BINS_PER_TIME} per mean click spacing)")
        edges = np.linspace(t1, t2, n_bins + 1)
        dt = L / n_bins
        centers = 0.5 * (edges[:-1] + edges[1:])
        E = space.coord_energy
        sw = np.sqrt(space.coord_weight)
        if carrier is None:
            occ = np.real(np.einsum("ij,ij->i", src.W, src.W.conj()))
            carrier = float(occ @ E / occ.sum()) if occ.sum() > 0 else float(E.mean())
        dE = E - carrier
        x = dE * dt
        core = np.where(np.abs(x) < _kernels.SMALL_PHASE, 1.0, np.sinc(x / (2 * np.pi)))
        amp = sw * core * np.sqrt(dt / (2 * np.pi))
        Vs = dil.stacked
        modes, cell_bin, cell_det = [], [], []
        for ix, lab in enumerate(labels):
            lam, U = np.linalg.eigh(dil.effect_operator(lab))
            for k in np.flatnonzero(lam > 1e-12):
                proj = np.sqrt(lam[k]) * (Vs.conj().T @ U[:, k])
                for c, tc in enumerate(centers):
                    modes.append(amp * np.exp(1j * dE * tc) * proj)
                    cell_bin.append(c)
                    cell_det.append(ix)
        Emat = np.array(modes).T
        A = Emat.conj().T @ src.W
        stats = src.statistics if statistics is None else statistics
        order = np.lexsort((cell_det, cell_bin))
        A = A[order]
        return cls(A @ A.conj().T, np.array(cell_bin)[order], np.array(cell_det)[order], edges, labels, stats)


def _spectrum(k: BinnedKernel):
    lam, U = k.matrix.eigh
    return np.clip(lam, 0.0, None), U


def _assemble(k: BinnedKernel, counts_list, u_list, seed) -> TrainBatch:
    times, dets, lens = [], [], []
    lo = k.edges[0]
    dt = k.bin_width
    for counts, u in zip(counts_list, u_list):
        sites = np.repeat(np.arange(k.n_cells), counts)
        t = lo + (k.cell_bin[sites] + u[: sites.size]) * dt
        order = np.argsort(t, kind="stable")
        times.append(t[order])
        dets.append(k.cell_detector[sites][order])
        lens.append(sites.size)
    return TrainBatch(
        np.concatenate(times) if times else np.zeros(0),
        np.concatenate(dets).astype(np.int64) if dets else np.zeros(0, np.int64),
        np.concatenate([[0], np.cumsum(lens)]).astype(np.int64),
        k.window,
        int(seed),
        k.labels,
    )


def sample_fermi(k: BinnedKernel, rng_seed: int, n_draws: int = 1, start: int = 0) -> TrainBatch:
    """Determinantal draws ``start .. start + n_draws - 1``.

    Raises
    ------
    EigenvalueOutOfRange
        If the kernel has an eigenvalue above one.
    """
    lam, U = _spectrum(k)
    if lam.size and lam[-1] > 1 + 1e-10:
        raise EigenvalueOutOfRange(f"eigenvalue {lam[-1]:.6g} exceeds 1")
    lam = np.minimum(lam, 1.0)
    keep = lam > 1e-15
    lam, U = lam[keep], np.ascontiguousarray(U[:, keep])
    n_eig, n = lam.size, k.n_cells
    counts_list, u_list = [], []
    for c0 in range(start, start + n_draws, CHUNK):
        c1 = min(c0 + CHUNK, start + n_draws)
        m = c1 - c0
        u_sel = np.empty((m, n_eig))
        u_pick = np.empty((m, n_eig))
        for j, d in enumerate(range(c0, c1)):
            rng = np.random.default_rng([rng_seed, d])
            u_sel[j] = rng.random(n_eig)
            u_pick[j] = rng.random(n_eig)
            u_list.append(rng.random(n))
        occ = _kernels.dpp_draws(U, lam, u_sel, u_pick) if n_eig else np.zeros((m, n), np.int8)
        counts_list.extend(occ.astype(np.int64))
    return _assemble(k, counts_list, u_list, rng_seed)


def sample_bose(k: BinnedKernel, rng_seed: int, n_draws: int = 1, start: int = 0) -> TrainBatch:
    """Cox draws: Poisson counts driven by a Gaussian field of covariance ``Kb``."""
    lam, U = _spectrum(k)
    keep = lam > 1e-15
    B = U[:, keep] * np.sqrt(lam[keep])
    r = B.shape[1]
    counts_list, u_list = [], []
    for d in range(start, start + n_draws):
        rng = np.random.default_rng([rng_seed, d])
        z = (rng.standard_normal(r) + 1j * rng.standard_normal(r)) / np.sqrt(2)
        g = B @ z
        counts = rng.poisson(np.abs(g) ** 2)
        counts_list.append(counts)
        u_list.append(rng.random(int(counts.sum())))
    return _assemble(k, counts_list, u_list, rng_seed)


def sample(k: BinnedKernel, rng_seed: int, n_draws: int = 1, start: int = 0) -> TrainBatch:
    s = k.statistics.s
    if s == -1:
        return sample_fermi(k, rng_seed, n_draws, start)
    if s == 1:
        return sample_bose(k, rng_seed, n_draws, start)
    raise ValidationError("sampling is implemented for Bose and Fermi statistics only")


# ---------------------------------------------------------------------------
# estimators


@dataclass(frozen=True)
class Estimate:
    value: np.ndarray
    stderr: np.ndarray

    def z(self, reference) -> np.ndarray:
        """Deviation from ``reference`` in standard errors."""
        ref = np.asarray(reference, dtype=float)
        se = np.where(self.stderr > 0, self.stderr, np.inf)
        return np.where(np.isclose(self.value, ref, rtol=0, atol=1e-15), 0.0, (self.value - ref) / se)


@dataclass(frozen=True)
class EmpiricalStats:
    n_trains: int
    p_n: Estimate
    mean: Estimate
    g2_edges: np.ndarray | None
    g2: Estimate | None
    wait_edges: np.ndarray | None
    wait: Estimate | None
    triggers: int


def _batch(trains) -> TrainBatch:
    if isinstance(trains, TrainBatch):
        return trains
    return TrainBatch.from_trains(trains)


def _select(b: TrainBatch, detectors):
    if detectors is None:
        return np.ones(b.times.size, dtype=bool)
    idx = [b.labels.index(str(x)) for x in detectors]
    return np.isin(b.detectors, idx)


def _ratio_se(num, den, scale=1.0):
    """Standard error of ``sum(num)/sum(den) * scale`` over trains."""
    R = num.shape[0]
    nb, db = num.mean(axis=0), den.mean()
    ratio = nb / db
    resid = num - ratio * den[:, None] if num.ndim == 2 else num - ratio * den
    var = resid.var(axis=0, ddof=1) / (R * db * db)
    return ratio * scale, np.sqrt(var) * scale


def estimate(trains, *, n_max: int = 10, detectors=None, g2_edges=None, g2_pair=None,
             wait_edges=None) -> EmpiricalStats:
    """Empirical count law, pair correlation and waiting-time density.

    Parameters
    ----------
    trains : TrainBatch or list of ClickTrain
    n_max : int
        Largest count reported in ``p_n``.
    detectors : labels, optional
        Detectors counted for ``p_n``, the mean and the waiting times.
    g2_edges : array, optional
        Non-negative lag bin edges for the pair correlation.
    g2_pair : (x, y), optional
        Detector pair of the correlation; defaults to ``detectors``.
    wait_edges : array, optional
        Bin edges of the next-click delay.  Only clicks at least
        ``wait_edges[-1]`` before the window end act as triggers.

    Raises
    ------
    EmptyData
        With fewer than two trains, or when a requested rate is zero.
    """
    b = _batch(trains)
    R = b.n_trains
    if R < 2:
        raise EmptyData("need at least two trains")
    t1, t2 = b.window
    L = t2 - t1
    sel = _select(b, detectors)
    seg = np.repeat(np.arange(R), np.diff(b.offsets))
    N = np.bincount(seg[sel], minlength=R).astype(float)
    hist = np.array([(N == n).mean() for n in range(n_max + 1)])
    p_n = Estimate(hist, np.sqrt(hist * (1 - hist) / R))
    mean = Estimate(np.array(N.mean()), np.array(N.std(ddof=1) / np.sqrt(R)))

    g2 = None
    if g2_edges is not None:
        edges = np.asarray(g2_edges, dtype=float)
        if edges[0] < 0:
            raise ValidationError("lag bins must be non-negative")
        x, y = g2_pair if g2_pair is not None else (detectors, detectors)
        isx = _select(b, None if x is None else [x] if isinstance(x, str) else x)
        isy = _select(b, None if y is None else [y] if isinstance(y, str) else y)
        P = _kernels.pair_lag_hist(b.times, isx, isy, b.offsets, edges).astype(float)
        Nx = np.bincount(seg[isx], minlength=R).astype(float)
        Ny = np.bincount(seg[isy], minlength=R).astype(float)
        if Nx.sum() == 0 or Ny.sum() == 0:
            raise EmptyData("no clicks on a correlated detector")
        d = np.diff(edges)
        norm = d * (L - edges[:-1] - d / 2) / L**2
        Pb, xb, yb = P.mean(axis=0), Nx.mean(), Ny.mean()
        val = Pb / (xb * yb * norm)
        # delta method on Pbar / (Nxbar Nybar)
        a = np.stack([np.broadcast_to(1.0 / np.where(Pb > 0, Pb, np.inf), Pb.shape),
                      np.full_like(Pb, -1.0 / xb), np.full_like(Pb, -1.0 / yb)])
        se = np.empty_like(Pb)
        for kk in range(Pb.size):
            Z = np.stack([P[:, kk], Nx, Ny])
            cov = np.cov(Z)
            se[kk] = abs(val[kk]) * np.sqrt(max(a[:, kk] @ cov @ a[:, kk], 0.0) / R)
        g2 = Estimate(val, se)

    wait = None
    trig_total = 0
    if wait_edges is not None:
        edges = np.asarray(wait_edges, dtype=float)
        t_sel = b.times[sel]
        off = np.concatenate([[0], np.cumsum(np.bincount(seg[sel], minlength=R))]).astype(np.int64)
        counts, trig = _kernels.next_gap_hist(t_sel, off, t2 - edges[-1], edges)
        trig_total = int(trig.sum())
        if trig_total == 0:
            raise EmptyData("no trigger clicks for the waiting-time histogram")
        val, se = _ratio_se(counts.astype(float), trig.astype(float))
        d = np.diff(edges)
        wait = Estimate(val / d, se / d)
    return EmpiricalStats(R, p_n, mean, None if g2 is None else np.asarray(g2_edges, float), g2,
                          None if wait is None else np.asarray(wait_edges, float), wait, trig_total)


# ---------------------------------------------------------------------------
# analytic counterparts under the binned model


def _tri_cdf(x, h):
    # CDF of the difference of two independent U(0, h) variables
    x = np.clip(x, -h, h)
    return np.where(x < 0, 0.5 * (1 + x / h) ** 2, 1 - 0.5 * (1 - x / h) ** 2)


def binned_pair_expectation(k: BinnedKernel, edges, pair=None) -> np.ndarray:
    """Expected pair correlation, normalized like :func:`estimate`.

    Uses the exact second factorial moments of the cell counts
    (``K_aa K_bb + s |K_ab|^2``; same cell ``(1 + s) K_aa^2``) and the
    triangular law of the difference of two uniform in-bin offsets.
    """
    edges = np.asarray(edges, dtype=float)
    s = k.statistics.value
    K = k.matrix.matrix
    diag = np.diag(K).real
    x, y = pair if pair is not None else (None, None)

    def cells(lab):
        if lab is None:
            return np.ones(k.n_cells, dtype=bool)
        return k.cell_detector == k.labels.index(str(lab))

    cx, cy = cells(x), cells(y)
    dt = k.bin_width
    rho2 = np.outer(diag, diag) + s * np.abs(K) ** 2
    # clicks in the same cell share a site; their ordered pairs are N(N-1)
    np.fill_diagonal(rho2, (1 + s) * diag**2)
    rho2 = rho2[np.ix_(cx, cy)]
    D = (k.cell_bin[cy][None, :] - k.cell_bin[cx][:, None]) * dt
    exp = np.empty(edges.size - 1)
    for i, (lo, hi) in enumerate(zip(edges[:-1], edges[1:])):
        prob = _tri_cdf(hi - D, dt) - _tri_cdf(lo - D, dt)
        exp[i] = np.sum(rho2 * prob)
    L = k.window[1] - k.window[0]
    gx, gy = diag[cx].sum() / L, diag[cy].sum() / L
    d = np.diff(edges)
    return exp / (gx * gy * d * (L - edges[:-1] - d / 2))


def count_law(k: BinnedKernel, n_max: int):
    from .pointproc import convolve_eigen_laws

    return convolve_eigen_laws(k.matrix.eigenvalues, k.statistics, n_max, tail_tol=1.0)
