"""Block decomposition of permutation-invariant n-qubit states.

A state ``rho^{(x)n}`` decomposes as ``sum_j p_j rho_j (x) 1/n_j`` over total
spin ``j``. Spins are stored as the integer ``two_j = 2j``; block matrices use
the basis ``|j, m>`` ordered ``m = j, j-1, ..., -j`` so that row ``i`` is Fock
level ``i`` after the embedding ``|j, m> -> |j - m>``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.linalg import eigh_tridiagonal
from scipy.sparse.linalg import expm_multiply
from scipy.special import gammaln

from .errors import DegenerateInputError, DomainError, InvariantViolation, ResourceError, ShapeError
from .fock import trace_norm

PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def bloch_to_rho(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    return 0.5 * (np.eye(2) + r[0] * PAULI["x"] + r[1] * PAULI["y"] + r[2] * PAULI["z"])


def rho_to_bloch(rho) -> np.ndarray:
    return np.array([np.trace(rho @ PAULI[a]).real for a in "xyz"])


@dataclass(frozen=True)
class QubitModel:
    """Local model around the Bloch vector ``(0, 0, r0)``.

    The true Bloch vector is ``(0, 0, r0) + u / sqrt(n)``.
    """

    r0: float
    u: tuple = (0.0, 0.0, 0.0)
    n: int = 1
    epsilon: float | None = None

    def __post_init__(self):
        if self.r0 == 0.0:
            raise DegenerateInputError("r0 = 0 leaves the rotation generator undefined")
        if not 0.0 < self.r0 < 1.0:
            raise DomainError(f"r0 must lie in (0, 1), got {self.r0}")
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"n must be a positive integer, got {self.n}")
        u = tuple(float(x) for x in self.u)
        if len(u) != 3:
            raise DomainError("u must be a 3-vector")
        object.__setattr__(self, "u", u)
        if not 0.0 < self.mu < 1.0:
            raise DomainError(f"Bloch vector {self.bloch} leaves the open unit ball")

    @property
    def bloch(self) -> np.ndarray:
        return np.array([0.0, 0.0, self.r0]) + np.asarray(self.u) / math.sqrt(self.n)

    @property
    def mu(self) -> float:
        return 0.5 * (1.0 + float(np.linalg.norm(self.bloch)))

    @property
    def s(self) -> float:
        return (1.0 - self.r0) / (1.0 + self.r0)

    @property
    def in_model(self) -> bool:
        """``||u|| <= n^epsilon`` (always True when epsilon is unset)."""
        if self.epsilon is None:
            return True
        return float(np.linalg.norm(self.u)) <= self.n ** self.epsilon


def valid_two_j(n: int) -> list:
    """Allowed values of 2j for n qubits, largest first."""
    return list(range(n, -1, -2))


def _check_two_j(n: int, two_j: int) -> int:
    if int(two_j) != two_j or two_j < 0 or two_j > n or (n - two_j) % 2:
        raise DomainError(f"2j={two_j} is not a valid total spin for n={n}")
    return int(two_j)


def multiplicity(n: int, two_j: int) -> int:
    """Dimension ``C(n, n/2 - j) - C(n, n/2 - j - 1)`` of the permutation irrep."""
    two_j = _check_two_j(n, two_j)
    k = (n - two_j) // 2
    return math.comb(n, k) - (math.comb(n, k - 1) if k >= 1 else 0)


def _log_multiplicity(n: int, two_j: int) -> float:
    k = (n - two_j) // 2
    # n_j = C(n, k) (n - 2k + 1) / (n - k + 1)
    return (gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
            + math.log(n - 2 * k + 1) - math.log(n - k + 1))


def spin_matrices(two_j: int) -> dict:
    """Spin-j matrices ``J_z, J_+, J_-, J_x, J_y`` in the ``m = j..-j`` basis."""
    j = two_j / 2.0
    m = j - np.arange(two_j + 1)
    Jz = np.diag(m).astype(complex)
    # <m+1|J_+|m> = sqrt((j-m)(j+m+1)); index of m+1 is one less than index of m
    Jp = np.zeros((two_j + 1, two_j + 1), dtype=complex)
    mm = m[1:]
    Jp[np.arange(two_j), np.arange(1, two_j + 1)] = np.sqrt((j - mm) * (j + mm + 1))
    Jm = Jp.conj().T
    return {"z": Jz, "+": Jp, "-": Jm, "x": 0.5 * (Jp + Jm), "y": (Jp - Jm) / 2j}


def rotation_to(bloch) -> tuple:
    """Axis and angle of the rotation taking +z to the direction of ``bloch``."""
    r = np.asarray(bloch, dtype=float)
    rn = np.linalg.norm(r)
    if rn == 0:
        return np.array([1.0, 0.0, 0.0]), 0.0
    rhat = r / rn
    perp = math.hypot(rhat[0], rhat[1])
    theta = math.atan2(perp, rhat[2])
    if perp == 0:
        return np.array([1.0, 0.0, 0.0]), theta
    axis = np.array([-rhat[1], rhat[0], 0.0]) / perp
    return axis, theta


def rotation_matrix(axis, angle) -> np.ndarray:
    """SO(3) matrix of the rotation (Rodrigues)."""
    n = np.asarray(axis, dtype=float)
    K = np.array([[0, -n[2], n[1]], [n[2], 0, -n[0]], [-n[1], n[0], 0]])
    return np.eye(3) + math.sin(angle) * K + (1 - math.cos(angle)) * K @ K


def spin_rotation(two_j: int, axis, angle: float) -> np.ndarray:
    """``exp(-i angle axis.J)`` in the spin-j irrep, via the Hermitian generator's spectrum."""
    if angle == 0:
        return np.eye(two_j + 1, dtype=complex)
    J = spin_matrices(two_j)
    G = axis[0] * J["x"] + axis[1] * J["y"] + axis[2] * J["z"]
    w, V = np.linalg.eigh(G)
    return (V * np.exp(-1j * angle * w)) @ V.conj().T


def block_weights(two_j: int, mu: float) -> np.ndarray:
    """Normalised diagonal of a block in the ``m = j..-j`` basis: ``prop. to ((1-mu)/mu)^i``."""
    i = np.arange(two_j + 1)
    if mu == 1.0:
        w = np.zeros(two_j + 1)
        w[0] = 1.0
        return w
    logx = math.log(1.0 - mu) - math.log(mu)
    lw = i * logx
    w = np.exp(lw - lw.max())
    return w / w.sum()


def _log_block_mass(n: int, two_j: int, mu: float) -> float:
    """log of ``sum_m mu^(n/2+m) (1-mu)^(n/2-m)`` for block 2j."""
    k = (n - two_j) // 2
    i = np.arange(two_j + 1)
    with np.errstate(divide="ignore"):
        lm, l1m = math.log(mu), (math.log(1.0 - mu) if mu < 1 else -np.inf)
    terms = (n - k - i) * lm + np.where(k + i > 0, (k + i) * l1m, 0.0)
    top = terms.max()
    if not np.isfinite(top):
        return -np.inf
    return float(top + np.log(np.exp(terms - top).sum()))


def block_probabilities_bloch(n: int, r: float, mode: str = "exact") -> dict:
    """Block law ``{2j: p_j}`` for Bloch length ``r``.

    ``exact``: ``p_j = n_j sum_m mu^(n/2+m) (1-mu)^(n/2-m)``.
    ``binomial``: ``C(n, j + n/2) ((1+r)/2)^(j+n/2) ((1-r)/2)^(n/2-j)``, renormalised.
    """
    mu = 0.5 * (1.0 + r)
    out = {}
    if mode == "exact":
        for tj in valid_two_j(n):
            lp = _log_multiplicity(n, tj) + _log_block_mass(n, tj, mu)
            out[tj] = math.exp(lp) if np.isfinite(lp) else 0.0
    elif mode == "binomial":
        for tj in valid_two_j(n):
            a = (n + tj) // 2
            lp = gammaln(n + 1) - gammaln(a + 1) - gammaln(n - a + 1)
            lp += a * math.log(mu) + ((n - a) * math.log(1 - mu) if n - a else 0.0)
            out[tj] = math.exp(lp)
        tot = sum(out.values())
        out = {k: v / tot for k, v in out.items()}
    else:
        raise DomainError(f"unknown mode {mode!r}")
    return out


def block_probabilities(model: QubitModel, mode: str = "exact") -> dict:
    return block_probabilities_bloch(model.n, float(np.linalg.norm(model.bloch)), mode)


def _jx_rotate_columns(two_j: int, theta: float, B: np.ndarray) -> np.ndarray:
    """``exp(-i theta J_x) B``; J_x is real tridiagonal."""
    j = two_j / 2.0
    mm = j - np.arange(1, two_j + 1)
    e = 0.5 * np.sqrt((j - mm) * (j + mm + 1))
    if two_j == 0:
        return B.astype(complex)
    if abs(theta) * j < 8.0:
        Jx = sparse.diags([e, e], [1, -1], format="csr")
        return expm_multiply(-1j * theta * Jx, B.astype(complex))
    w, V = eigh_tridiagonal(np.zeros(two_j + 1), e)
    return (V * np.exp(-1j * theta * w)) @ (V.T @ B)


def block_state_bloch(bloch, two_j: int, weight_cut: float = 1e-20) -> np.ndarray:
    """Normalised block ``pi_j(U) diag(w) pi_j(U)^dag`` for the Bloch vector ``bloch``.

    The rotation is applied as ``R_z(psi) exp(-i theta J_x) R_z(-psi)`` with
    ``psi = phi + pi/2``; weights below ``weight_cut`` times the largest are skipped.
    """
    r = float(np.linalg.norm(bloch))
    w = block_weights(two_j, 0.5 * (1 + r))
    axis, theta = rotation_to(bloch)
    if theta == 0:
        return np.diag(w).astype(complex)
    keep = int(np.count_nonzero(w > weight_cut * w[0]))
    psi = math.atan2(bloch[1], bloch[0]) + 0.5 * math.pi
    m = two_j / 2.0 - np.arange(two_j + 1)
    B = np.zeros((two_j + 1, keep), dtype=complex)
    B[np.arange(keep), np.arange(keep)] = np.exp(1j * psi * m[:keep])
    cols = _jx_rotate_columns(two_j, theta, B) * np.exp(-1j * psi * m)[:, None]
    rho = (cols * w[:keep]) @ cols.conj().T
    return 0.5 * (rho + rho.conj().T)


def block_state(model: QubitModel, two_j: int) -> np.ndarray:
    _check_two_j(model.n, two_j)
    return block_state_bloch(model.bloch, two_j)


@dataclass
class Block:
    two_j: int
    multiplicity: int
    probability: float
    rho: np.ndarray = field(repr=False)

    @property
    def j(self) -> float:
        return self.two_j / 2.0


@dataclass
class BlockDecomposition:
    """``{2j: Block}`` for an n-qubit permutation-invariant state."""

    n: int
    blocks: dict
    dropped_mass: float = 0.0

    def total_probability(self) -> float:
        return float(sum(b.probability for b in self.blocks.values()))

    def probabilities(self) -> dict:
        return {tj: b.probability for tj, b in self.blocks.items()}

    def dimension_check(self) -> int:
        return sum((tj + 1) * multiplicity(self.n, tj) for tj in valid_two_j(self.n))

    def rotated(self, axis, angle) -> "BlockDecomposition":
        """Apply ``pi_n(U)`` for the rotation ``(axis, angle)`` block by block."""
        new = {}
        for tj, b in self.blocks.items():
            U = spin_rotation(tj, axis, angle)
            new[tj] = Block(tj, b.multiplicity, b.probability, U @ b.rho @ U.conj().T)
        return BlockDecomposition(self.n, new, self.dropped_mass)

    def weighted(self, tj: int) -> np.ndarray:
        b = self.blocks[tj]
        return b.probability * b.rho

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "blocks": [
                {
                    "two_j": tj,
                    "multiplicity": b.multiplicity,
                    "probability": b.probability,
                    "rho_real": np.asarray(b.rho).real.tolist(),
                    "rho_imag": np.asarray(b.rho).imag.tolist(),
                }
                for tj, b in sorted(self.blocks.items(), reverse=True)
            ],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "BlockDecomposition":
        blocks = {}
        for e in d["blocks"]:
            rho = np.asarray(e["rho_real"]) + 1j * np.asarray(e["rho_imag"])
            blocks[int(e["two_j"])] = Block(int(e["two_j"]), int(e["multiplicity"]),
                                            float(e["probability"]), rho)
        return cls(int(d["n"]), blocks)


def decompose_bloch(bloch, n: int, min_prob: float = 0.0) -> BlockDecomposition:
    """Exact decomposition of ``rho_r^{(x)n}``; blocks with ``p_j <= min_prob`` are dropped."""
    r = float(np.linalg.norm(bloch))
    if r > 1.0 + 1e-12:
        raise DomainError("Bloch vector outside the unit ball")
    probs = block_probabilities_bloch(n, min(r, 1.0), "exact")
    blocks = {}
    dropped = 0.0
    for tj, p in probs.items():
        if p <= min_prob:
            dropped += p
            continue
        blocks[tj] = Block(tj, multiplicity(n, tj), p, block_state_bloch(bloch, tj))
    return BlockDecomposition(n, blocks, dropped)


def decompose(model: QubitModel, min_prob: float = 0.0) -> BlockDecomposition:
    return decompose_bloch(model.bloch, model.n, min_prob)


def _coupled_basis(n: int) -> list:
    """Orthonormal coupled basis of (C^2)^{(x)n} by iterated spin-1/2 coupling.

    Returns a list of ``(two_j, C)`` with C of shape ``(2^n, 2j+1)``, columns
    ``|j, m>`` for ``m = j..-j`` (Condon-Shortley phases).
    """
    up, dn = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    states = [(1, np.eye(2))]
    for _ in range(n - 1):
        new = []
        for tj, C in states:
            j = tj / 2.0
            dim = C.shape[0] * 2
            col = lambda m: C[:, int(round(j - m))]
            # j + 1/2
            tJ = tj + 1
            J = tJ / 2.0
            D = np.zeros((dim, tJ + 1))
            for i in range(tJ + 1):
                M = J - i
                v = np.zeros(dim)
                if abs(M - 0.5) <= j:
                    v += math.sqrt((j + M + 0.5) / (2 * j + 1)) * np.kron(col(M - 0.5), up)
                if abs(M + 0.5) <= j:
                    v += math.sqrt((j - M + 0.5) / (2 * j + 1)) * np.kron(col(M + 0.5), dn)
                D[:, i] = v
            new.append((tJ, D))
            if tj >= 1:
                tJ = tj - 1
                J = tJ / 2.0
                D = np.zeros((dim, tJ + 1))
                for i in range(tJ + 1):
                    M = J - i
                    v = (-math.sqrt((j - M + 0.5) / (2 * j + 1)) * np.kron(col(M - 0.5), up)
                         + math.sqrt((j + M + 0.5) / (2 * j + 1)) * np.kron(col(M + 0.5), dn))
                    D[:, i] = v
                new.append((tJ, D))
        states = new
    return states


def brute_force_decompose(rho, n: int, tol: float = 1e-12) -> BlockDecomposition:
    """Decompose ``rho^{(x)n}`` by projecting the Kronecker power on a coupled basis.

    Copies of the same j are checked to agree within ``tol`` and averaged.
    """
    if n > 10:
        raise ResourceError("brute-force decomposition is limited to n <= 10")
    if n < 1:
        raise DomainError("n must be >= 1")
    rho = np.asarray(rho, dtype=complex)
    big = rho
    for _ in range(n - 1):
        big = np.kron(big, rho)
    copies: dict = {}
    for tj, C in _coupled_basis(n):
        copies.setdefault(tj, []).append(C.T @ big @ C)
    blocks = {}
    for tj, mats in copies.items():
        ref = mats[0]
        for Bm in mats[1:]:
            if np.max(np.abs(Bm - ref)) > tol:
                raise InvariantViolation(f"multiplicity copies of 2j={tj} disagree")
        avg = sum(mats) / len(mats)
        nj = len(mats)
        if nj != multiplicity(n, tj):
            raise InvariantViolation("coupled basis produced a wrong multiplicity")
        tr = np.trace(avg).real
        p = nj * tr
        blocks[tj] = Block(tj, nj, float(p), avg / tr if tr > 0 else np.zeros_like(avg))
    return BlockDecomposition(n, blocks)


def collective_spin_moments(model: QubitModel) -> dict:
    """Means and variances of ``L_a = sum_i sigma_a^(i)`` under ``rho^{(x)n}``.

    Also returns the rescaled moments and the amplitude
    ``(<L_x> + i <L_y>) / (2 sqrt(n r0))`` predicted for the limit oscillator.
    """
    n = model.n
    r = model.bloch
    mean = n * r
    var = n * (1.0 - r ** 2)
    scaled_mean = np.array([mean[0], mean[1], mean[2] - n * model.r0]) / math.sqrt(n)
    return {
        "mean": mean,
        "variance": var,
        "scaled_mean": scaled_mean,
        "scaled_variance": var / n,
        "alpha": complex(mean[0], mean[1]) / (2.0 * math.sqrt(n * model.r0)),
    }


def block_l1(d1: BlockDecomposition, d2: BlockDecomposition) -> float:
    """``sum_j ||p_j rho_j - p'_j rho'_j||_1``; absent blocks count as zero.

    Multiplicity registers are ``I/n_j`` on both sides and drop out.
    """
    if d1.n != d2.n:
        raise ShapeError(f"qubit counts differ: {d1.n} vs {d2.n}")
    total = 0.0
    for tj in set(d1.blocks) | set(d2.blocks):
        zero = np.zeros((tj + 1, tj + 1))
        A = d1.weighted(tj) if tj in d1.blocks else zero
        B = d2.weighted(tj) if tj in d2.blocks else zero
        total += trace_norm(A - B)
    return total


def require_mass(d: BlockDecomposition):
    if d.total_probability() <= 0:
        raise DegenerateInputError("decomposition carries no probability")
