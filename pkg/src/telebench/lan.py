"""Channels between n-qubit block decompositions and the Gaussian shift model.

``channel_T`` maps ``rho^{(x)n}`` to a hybrid classical-quantum state: the
classical coordinate is the smoothed, rescaled total spin and the quantum part
is the block embedded into Fock space. ``channel_S`` goes back. The classical
coordinate lives on a uniform grid; slabs are stored as densities so that
``sum_k dx * tr M_k = 1``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from . import fock
from .errors import CoverageError, DegenerateInputError, DomainError, ShapeError, TruncationError
from .schur_weyl import Block, BlockDecomposition, QubitModel, block_l1, decompose, multiplicity

COVERAGE_TOL = 1e-10
TRUNCATION_TOL = 1e-8


@dataclass(frozen=True)
class Grid:
    x_min: float
    x_max: float
    bins: int

    def __post_init__(self):
        if self.bins < 1 or not self.x_max > self.x_min:
            raise DomainError("grid needs bins >= 1 and x_max > x_min")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.bins

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.bins + 1)

    @property
    def centers(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[1:] + e[:-1])

    def index(self, x: float) -> int:
        k = int(math.floor((x - self.x_min) / self.dx))
        return min(max(k, 0), self.bins - 1)

    def normal_masses(self, mean: float, var: float) -> np.ndarray:
        """Exact mass of ``N(mean, var)`` in each bin."""
        z = (self.edges - mean) / math.sqrt(var)
        return np.diff(ndtr(z))


@dataclass
class HybridState:
    """Classical density on ``grid`` times a quantum matrix per bin.

    ``slabs[k]`` is the (unnormalised) quantum part at bin k, scaled as a
    density: ``sum_k dx * tr slabs[k] = 1``.
    """

    grid: Grid
    slabs: np.ndarray
    lost_mass: float = 0.0

    def __post_init__(self):
        if self.slabs.ndim != 3 or self.slabs.shape[0] != self.grid.bins:
            raise ShapeError("slabs must have shape (bins, N, N)")

    @property
    def N(self) -> int:
        return self.slabs.shape[1]

    def classical_masses(self) -> np.ndarray:
        return self.grid.dx * np.einsum("kii->k", self.slabs).real

    def classical_density(self) -> np.ndarray:
        return np.einsum("kii->k", self.slabs).real

    def total_mass(self) -> float:
        return float(self.classical_masses().sum())

    def quantum_marginal(self) -> np.ndarray:
        return self.grid.dx * self.slabs.sum(axis=0)

    def min_eigenvalue(self) -> float:
        Xh = 0.5 * (self.slabs + np.swapaxes(self.slabs.conj(), -1, -2))
        return float(np.linalg.eigvalsh(Xh).min())

    @classmethod
    def product(cls, grid: Grid, masses: np.ndarray, rho: np.ndarray) -> "HybridState":
        masses = np.asarray(masses, dtype=float)
        return cls(grid, (masses / grid.dx)[:, None, None] * np.asarray(rho)[None])


def alpha_of_u(u, r0: float) -> complex:
    """Displacement of the limit oscillator: ``(u_x + i u_y) / (2 sqrt(r0))``."""
    return complex(u[0], u[1]) / (2.0 * math.sqrt(r0))


def u_of_alpha(alpha: complex, r0: float) -> tuple:
    a = 2.0 * math.sqrt(r0) * complex(alpha)
    return a.real, a.imag


def rescaled_spin(n: int, two_j, r0: float):
    """``G_n(j) = sqrt(n) (2j/n - r0)``."""
    return math.sqrt(n) * (np.asarray(two_j, dtype=float) / n - r0)


def kernel_variance(n: int) -> float:
    return 1.0 / (2.0 * math.sqrt(n))


@dataclass(frozen=True)
class LanConfig:
    """Model point, Fock truncation and classical grid for the LAN channels."""

    n: int
    r0: float
    u: tuple = (0.0, 0.0, 0.0)
    N: int = 0
    grid: Grid | None = None
    epsilon: float = 0.1
    seed: int = 0

    def __post_init__(self):
        model = QubitModel(self.r0, self.u, self.n)
        object.__setattr__(self, "u", model.u)
        # blocks decay with ratio (1 - mu)/mu of the true state, not of r0
        s = max(model.s, (1.0 - model.mu) / model.mu)
        alpha = alpha_of_u(self.u, self.r0)
        need = fock.displaced_thermal_truncation(alpha, s)
        if self.N == 0:
            object.__setattr__(self, "N", need)
        elif self.N < need:
            raise TruncationError(f"N={self.N} fails the tail bound for s={s:.4g}, |alpha|={abs(alpha):.3g}")
        if self.grid is None:
            object.__setattr__(self, "grid", default_grid(self.n, self.r0, self.u))
        sd = math.sqrt(1.0 - self.r0 ** 2)
        lo, hi = self.u[2] - 6 * sd, self.u[2] + 6 * sd
        if self.grid.x_min > lo or self.grid.x_max < hi:
            raise CoverageError(f"grid [{self.grid.x_min}, {self.grid.x_max}] misses u_z +- 6 sd")

    @property
    def model(self) -> QubitModel:
        return QubitModel(self.r0, self.u, self.n, self.epsilon)

    @property
    def s(self) -> float:
        return (1.0 - self.r0) / (1.0 + self.r0)

    @property
    def alpha(self) -> complex:
        return alpha_of_u(self.u, self.r0)


def default_grid(n: int, r0: float, u=(0.0, 0.0, 0.0), bins: int = 2048) -> Grid:
    """Grid centred at ``u_z`` spanning 8 standard deviations plus the kernel width."""
    half = 8.0 * math.sqrt(1.0 - r0 ** 2 + kernel_variance(n)) + 1.0
    return Grid(u[2] - half, u[2] + half, bins)


def fock_isometry_apply(rho_j: np.ndarray, N: int) -> np.ndarray:
    """``V_j rho V_j^dag`` with ``|j, m> -> |j - m>``, padded to N levels."""
    rho_j = np.asarray(rho_j)
    d = rho_j.shape[0]
    if d > N:
        raise TruncationError(f"block of dimension {d} does not fit {N} Fock levels")
    out = np.zeros((N, N), dtype=complex)
    out[:d, :d] = rho_j
    return out


def fock_coisometry_apply(rho: np.ndarray, two_j: int) -> tuple:
    """Compress to the first ``2j+1`` levels, renormalise and map back by ``V_j^dag``.

    Returns ``(block, lost)`` with ``lost`` the trace fraction cut away.
    """
    d = two_j + 1
    N = rho.shape[0]
    tr = np.trace(rho).real
    if tr <= 0:
        raise DegenerateInputError("cannot compress a state with no mass")
    block = np.zeros((d, d), dtype=complex)
    m = min(d, N)
    block[:m, :m] = rho[:m, :m]
    kept = np.trace(block).real
    if kept <= 0:
        raise DegenerateInputError("compression removed all mass")
    return block / kept, 1.0 - kept / tr


def smoothing_kernel(n: int, two_j: int, r0: float, grid: Grid, check: bool = True) -> np.ndarray:
    """Bin masses of ``N(G_n(j), 1/(2 sqrt(n)))`` on ``grid``.

    With ``check`` the grid must cover the centre plus six standard deviations.
    """
    mu = float(rescaled_spin(n, two_j, r0))
    var = kernel_variance(n)
    if check:
        w = 6.0 * math.sqrt(var)
        if mu - w < grid.x_min or mu + w > grid.x_max:
            raise CoverageError(f"grid misses kernel centre {mu:.3g} +- {w:.3g}")
    return grid.normal_masses(mu, var)


def channel_T(decomp: BlockDecomposition, cfg: LanConfig) -> HybridState:
    """``rho -> sum_j p_j K_{n,j} (x) V_j rho_j V_j^dag``.

    Blocks larger than N levels are cropped; the cropped trace plus the kernel
    mass falling off the grid is recorded as ``lost_mass`` and must stay below
    :data:`TRUNCATION_TOL`.
    """
    if decomp.n != cfg.n:
        raise ShapeError(f"decomposition has n={decomp.n}, config n={cfg.n}")
    grid, N = cfg.grid, cfg.N
    tjs = sorted(decomp.blocks)
    masses = np.empty((grid.bins, len(tjs)))
    quantum = np.zeros((len(tjs), N, N), dtype=complex)
    lost = 0.0
    for c, tj in enumerate(tjs):
        b = decomp.blocks[tj]
        km = smoothing_kernel(cfg.n, tj, cfg.r0, grid, check=False)
        m = min(tj + 1, N)
        quantum[c, :m, :m] = b.rho[:m, :m]
        kept = np.trace(quantum[c]).real
        lost += b.probability * (1.0 - km.sum() * kept)
        masses[:, c] = b.probability * km
    if lost > TRUNCATION_TOL:
        raise TruncationError(f"channel_T lost mass {lost:.3g}; enlarge N or the grid")
    slabs = np.einsum("kc,cij->kij", masses / grid.dx, quantum)
    return HybridState(grid, slabs, lost)


def channel_T_quantum(decomp: BlockDecomposition, N: int | None = None) -> np.ndarray:
    """Quantum part of ``channel_T`` with the classical coordinate traced out.

    Each kernel integrates to one, so this is ``sum_j p_j V_j rho_j V_j^dag``
    and needs no grid. ``N`` defaults to ``n + 1`` (no cropping).
    """
    N = decomp.n + 1 if N is None else int(N)
    out = np.zeros((N, N), dtype=complex)
    for tj, b in decomp.blocks.items():
        m = min(tj + 1, N)
        out[:m, :m] += b.probability * b.rho[:m, :m]
    return out


def gaussian_target(u, r0: float, cfg: LanConfig) -> HybridState:
    """``Phi_u (x) N(u_z, 1 - r0^2)`` on the config grid and truncation."""
    s = (1.0 - r0) / (1.0 + r0)
    rho = fock.displaced_thermal(alpha_of_u(u, r0), s, cfg.N)
    masses = cfg.grid.normal_masses(u[2], 1.0 - r0 ** 2)
    h = HybridState.product(cfg.grid, masses, rho)
    h.lost_mass = 1.0 - masses.sum() * np.trace(rho).real
    return h


def j_of_x(x, n: int, r0: float):
    """Valid ``2j`` nearest to ``n r0 + sqrt(n) x`` (ties upward), clipped to the range."""
    raw = n * r0 + math.sqrt(n) * np.asarray(x, dtype=float)
    lo = n % 2
    tj = lo + 2 * np.floor((raw - lo) / 2.0 + 0.5)
    return np.clip(tj, lo, n).astype(int)


def _bin_assignment(grid: Grid, n: int, r0: float) -> list:
    """Split each bin among spins: list of ``(bin, 2j, fraction)``.

    The boundary between 2j and 2j+2 sits at ``x = (2j + 1 - n r0)/sqrt(n)``;
    a bin straddling boundaries is divided in proportion to length.
    """
    edges = grid.edges
    out = []
    sq = math.sqrt(n)
    for k in range(grid.bins):
        a, b = edges[k], edges[k + 1]
        ta, tb = int(j_of_x(a, n, r0)), int(j_of_x(b, n, r0))
        if ta == tb:
            out.append((k, ta, 1.0))
            continue
        start = a
        for tj in range(ta, tb + 1, 2):
            stop = b if tj == tb else min(max((tj + 1 - n * r0) / sq, start), b)
            frac = (stop - start) / (b - a)
            if frac > 0:
                out.append((k, tj, frac))
            start = stop
    return out


def channel_S(h: HybridState, n: int, r0: float) -> BlockDecomposition:
    """Discretise the classical coordinate to spins and compress the quantum part.

    Per spin, slabs of the bins mapped to it are summed with their masses,
    cut to ``2j+1`` levels, renormalised and mapped to the block by
    ``V_j^dag``. Multiplicity registers are ``I/n_j``.
    """
    total = h.total_mass()
    if total <= 0:
        raise DegenerateInputError("hybrid state carries no classical mass")
    acc: dict = {}
    dx = h.grid.dx
    for k, tj, frac in _bin_assignment(h.grid, n, r0):
        w = frac * dx
        if tj in acc:
            acc[tj] = acc[tj] + w * h.slabs[k]
        else:
            acc[tj] = w * h.slabs[k]
    blocks = {}
    lost = 0.0
    for tj, M in acc.items():
        p = np.trace(M).real / total
        if p <= 0:
            continue
        rho, cut = fock_coisometry_apply(M, tj)
        lost += p * cut
        blocks[tj] = Block(tj, multiplicity(n, tj), float(p), rho)
    return BlockDecomposition(n, blocks, dropped_mass=lost)


def hybrid_l1(h1: HybridState, h2: HybridState) -> float:
    """``sum_k dx ||M1_k - M2_k||_1``."""
    if h1.grid != h2.grid or h1.slabs.shape != h2.slabs.shape:
        raise ShapeError("hybrid states live on different grids or truncations")
    return float(h1.grid.dx * fock.trace_norm_stack(h1.slabs - h2.slabs).sum())


def discretization_bound(h1: HybridState, h2: HybridState) -> float:
    """``dx`` times the total variation of the slab difference along the grid.

    Bounds how far the binned distance can sit from the continuum one.
    """
    D = h1.slabs - h2.slabs
    return float(h1.grid.dx * fock.trace_norm_stack(np.diff(D, axis=0)).sum())


def lan_distances(cfg: LanConfig, min_prob: float = 1e-15) -> dict:
    """Both directions of the LAN distance at the config's model point."""
    model = QubitModel(cfg.r0, cfg.u, cfg.n)
    d = decompose(model, min_prob)
    target = gaussian_target(cfg.u, cfg.r0, cfg)
    th = channel_T(d, cfg)
    dist_T = hybrid_l1(th, target)
    back = channel_S(target, cfg.n, cfg.r0)
    dist_S = block_l1(back, d)
    return {
        "dist_T": dist_T,
        "dist_S": dist_S,
        "tolerance": discretization_bound(th, target) + th.lost_mass + abs(target.lost_mass)
        + d.dropped_mass + back.dropped_mass,
        "in_model": float(np.linalg.norm(cfg.u)) <= cfg.n ** cfg.epsilon,
    }


SCAN_COLUMNS = ("n", "u_x", "u_y", "u_z", "r0", "dist_T", "dist_S", "grid_bins", "fock_N", "seed")


def lan_convergence_scan(n_list, u, r0: float, *, N: int = 0, bins: int = 2048,
                         epsilon: float = 0.1, seed: int = 0) -> list:
    """Per-n LAN distances as rows keyed by :data:`SCAN_COLUMNS` (plus bookkeeping)."""
    rows = []
    for n in n_list:
        grid = default_grid(n, r0, u, bins)
        cfg = LanConfig(n, r0, tuple(u), N, grid, epsilon, seed)
        res = lan_distances(cfg)
        rows.append({
            "n": n, "u_x": cfg.u[0], "u_y": cfg.u[1], "u_z": cfg.u[2], "r0": r0,
            "dist_T": res["dist_T"], "dist_S": res["dist_S"],
            "grid_bins": bins, "fock_N": cfg.N, "seed": seed,
            "tolerance": res["tolerance"], "in_model": res["in_model"],
        })
    return rows


def write_scan_csv(rows, fh, extra: bool = False) -> None:
    cols = list(SCAN_COLUMNS) + (["tolerance", "in_model"] if extra else [])
    w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
