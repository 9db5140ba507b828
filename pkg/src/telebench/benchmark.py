"""Minmax risk of measure-and-prepare schemes for displaced thermal states.

The covariant measure-and-prepare channels are labelled by a diagonal
preparation state ``tau``; on the thermal input ``Phi(s)`` their output is
diagonal with populations ``p^tau``. The heterodyne scheme corresponds to
``tau = |0><0|`` and its risk has the closed form :func:`optimal_risk`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from . import fock
from .errors import DomainError, InvariantViolation


def _check_open_unit(s: float, name: str = "s") -> float:
    s = float(s)
    if not 0.0 < s < 1.0:
        raise DomainError(f"{name} must lie in (0, 1), got {s}")
    return s


def reprepared_s(s: float) -> float:
    """Thermal parameter ``1/(2 - s)`` of the heterodyne-and-prepare output."""
    return 1.0 / (2.0 - s)


def crossover_m0(s: float) -> int:
    """Last Fock level at which the reprepared populations do not exceed the input's.

    ``floor(-log(2 - s) / log(s (2 - s)))``; the floor resolves exact integer ties downward.
    """
    s = _check_open_unit(s)
    return int(math.floor(-math.log(2.0 - s) / math.log(s * (2.0 - s))))


def optimal_risk(s: float) -> float:
    """Trace-norm risk ``2 (2-s)^(-m0-1) - 2 s^(m0+1)`` of heterodyne + coherent preparation.

    Endpoints are continuous extensions: 1 at ``s = 0`` and 0 at ``s = 1``.
    """
    s = float(s)
    if s == 0.0:
        return 1.0
    if s == 1.0:
        return 0.0
    s = _check_open_unit(s)
    m0 = crossover_m0(s)
    return 2.0 * (2.0 - s) ** (-(m0 + 1)) - 2.0 * s ** (m0 + 1)


def geometric_l1(s: float, s_tilde: float, N: int = 500, return_tail: bool = False):
    """Brute-force ``sum_i |q_i - p_i|`` for two geometric laws, summed to N levels.

    With ``return_tail`` also returns the dropped mass ``s**N + s_tilde**N``,
    an upper bound on the truncation error.
    """
    q = fock.thermal_state(s, N)
    p = fock.thermal_state(s_tilde, N)
    val = float(np.abs(q - p).sum())
    if return_tail:
        return val, fock.tail_bound(s, N) + fock.tail_bound(s_tilde, N)
    return val


@dataclass(frozen=True)
class GeometricPair:
    """Input thermal populations ``q`` and heterodyne-output populations ``p``."""

    s: float
    N: int = 500
    q: np.ndarray = field(init=False, repr=False)
    p: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        _check_open_unit(self.s)
        object.__setattr__(self, "q", fock.thermal_state(self.s, self.N))
        object.__setattr__(self, "p", fock.thermal_state(self.s_tilde, self.N))

    @property
    def s_tilde(self) -> float:
        return reprepared_s(self.s)

    @property
    def m0(self) -> int:
        return crossover_m0(self.s)

    def crossover_scan(self) -> int:
        """Last l before the first level where ``p_l > q_l`` (scanning oracle for :attr:`m0`)."""
        idx = np.nonzero(self.p > self.q)[0]
        return int(idx[0]) - 1 if idx.size else self.N - 1


def _binom_log(n, k):
    return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)


def amplifier_fock_output(k: int, gamma: float, L: int) -> np.ndarray:
    """Output populations ``d^k_l = (1-g)^(k+1) g^(l-k) C(l, k)`` for an amplified ``|k>``."""
    if not 0.0 < gamma < 1.0:
        raise DomainError(f"gamma must lie in (0, 1), got {gamma}")
    if L <= k:
        raise DomainError(f"truncation L={L} must exceed k={k}")
    l = np.arange(L)
    d = np.zeros(L)
    ll = l[k:]
    d[k:] = np.exp((k + 1) * np.log1p(-gamma) + (ll - k) * np.log(gamma) + _binom_log(ll, k))
    return d


def amplifier_matrix(gamma: float, K: int, L: int) -> np.ndarray:
    """Columns ``d^k`` for ``k < K``, shape (L, K)."""
    return np.stack([amplifier_fock_output(k, gamma, L) for k in range(K)], axis=1)


def loss_matrix(T2: float, K: int) -> np.ndarray:
    """Beamsplitter-with-vacuum map on populations: ``C(k, p) R^(2p) T^(2(k-p))``, ``R^2 = 1 - T2``."""
    if not 0.0 <= T2 <= 1.0:
        raise DomainError(f"T2 must lie in [0, 1], got {T2}")
    R2 = 1.0 - T2
    B = np.zeros((K, K))
    for k in range(K):
        for p in range(k + 1):
            B[p, k] = math.comb(k, p) * R2 ** p * T2 ** (k - p)
    return B


def loss_binomial(tau: np.ndarray, T2: float) -> np.ndarray:
    """Populations of the reflected arm when ``tau`` is mixed with vacuum.

    ``tau~_p = sum_{k>=p} tau_k C(k,p) R^(2p) T^(2(k-p))``.
    """
    tau = np.asarray(tau, dtype=float)
    return loss_matrix(T2, tau.size) @ tau


@dataclass(frozen=True)
class CovariantChannel:
    """Phase-covariant measure-and-prepare channel labelled by diagonal ``tau``.

    Constants follow the two-mode purification: ``tanh^2 t = s``,
    ``sinh t~ = cosh t``, ``gamma = tanh^2 t~``, ``T = sinh t / cosh t~``,
    ``R = sqrt(2) / cosh t~``.
    """

    tau: np.ndarray
    s: float

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=float)
        if np.any(tau < -1e-14) or abs(tau.sum() - 1.0) > 1e-9:
            raise DomainError("tau must be a probability vector")
        object.__setattr__(self, "tau", tau)
        _check_open_unit(self.s)

    @property
    def constants(self) -> dict:
        s = self.s
        t = math.atanh(math.sqrt(s))
        tt = math.asinh(math.cosh(t))
        gamma = math.tanh(tt) ** 2
        T = math.sinh(t) / math.cosh(tt)
        R = math.sqrt(2.0) / math.cosh(tt)
        return {"t": t, "t_tilde": tt, "gamma": gamma, "T": T, "R": R}

    @property
    def gamma(self) -> float:
        return reprepared_s(self.s)


def _checked_constants(ch: CovariantChannel) -> dict:
    c = ch.constants
    s = ch.s
    if abs(c["gamma"] - 1.0 / (2.0 - s)) > 1e-12:
        raise InvariantViolation("gamma != 1/(2-s)")
    if abs(c["T"] ** 2 + c["R"] ** 2 - 1.0) > 1e-12:
        raise InvariantViolation("T^2 + R^2 != 1")
    if abs(c["T"] ** 2 - s / (2.0 - s)) > 1e-12:
        raise InvariantViolation("T^2 != s/(2-s)")
    return c


def covariant_response(s: float, K: int, N: int) -> np.ndarray:
    """Linear map ``tau -> p^tau`` as an (N, K) matrix."""
    ch = CovariantChannel(np.eye(K)[0], s)
    c = _checked_constants(ch)
    return amplifier_matrix(c["gamma"], K, N) @ loss_matrix(c["T"] ** 2, K)


def covariant_channel_output(ch: CovariantChannel, N: int) -> np.ndarray:
    """Output populations ``p^tau = sum_p tau~_p d^p`` of the channel on ``Phi(s)``."""
    c = _checked_constants(ch)
    tau_t = loss_binomial(ch.tau, c["T"] ** 2)
    D = amplifier_matrix(c["gamma"], tau_t.size, N)
    return D @ tau_t


@dataclass(frozen=True)
class OrderResult:
    ordered: bool
    witness: int | None


def stochastic_order_check(p: np.ndarray, q: np.ndarray, tol: float = 1e-12) -> OrderResult:
    """Is ``p`` stochastically smaller than ``q`` (every prefix sum of p dominates q's)?"""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise DomainError(f"truncations differ: {p.shape} vs {q.shape}")
    gap = np.cumsum(p) - np.cumsum(q)
    bad = np.nonzero(gap < -tol)[0]
    if bad.size:
        return OrderResult(False, int(bad[0]))
    return OrderResult(True, None)


def prefix_sup_l1(p: np.ndarray, q: np.ndarray) -> float:
    """``2 sup_m sum_{l<=m} (q_l - p_l)``: the L1 restricted to prefix sets."""
    return 2.0 * max(0.0, float(np.max(np.cumsum(q - p))))


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    j = np.arange(1, v.size + 1)
    rho = np.nonzero(u + (1.0 - css) / j > 0)[0][-1]
    lam = (1.0 - css[rho]) / (rho + 1.0)
    return np.maximum(v + lam, 0.0)


@dataclass
class TauOptimum:
    tau: np.ndarray
    risk: float
    converged: bool
    iterations: int
    starts: int


def minimize_over_tau(s: float, K: int, N: int = 500, *, starts: int = 20,
                      max_iter: int = 4000, step: float = 0.5, tol: float = 1e-8,
                      seed: int = 0) -> TauOptimum:
    """Minimise ``||p^tau - q||_1`` over diagonal preparation states with K levels.

    Projected subgradient descent from ``starts`` random points of the simplex
    (plus the uniform point); step sizes decay as ``step / sqrt(i + 1)``. A run
    stops when the iterate moves less than ``tol``. The best iterate seen over
    all runs is returned; ``converged`` is False if any run hit ``max_iter``.
    """
    _check_open_unit(s)
    if K < 1:
        raise DomainError("K must be >= 1")
    q = fock.thermal_state(s, N)
    if K == 1:
        tau = np.ones(1)
        return TauOptimum(tau, float(np.abs(covariant_response(s, 1, N)[:, 0] - q).sum()), True, 0, 0)
    A = covariant_response(s, K, N)
    f = lambda x: float(np.abs(A @ x - q).sum())
    rng = np.random.default_rng(seed)
    inits = [np.full(K, 1.0 / K)] + [rng.dirichlet(np.ones(K)) for _ in range(starts)]
    best_x, best_f = None, np.inf
    all_converged = True
    total_iter = 0
    for x in inits:
        x = x.copy()
        converged = False
        for i in range(max_iter):
            fx = f(x)
            if fx < best_f:
                best_x, best_f = x.copy(), fx
            g = A.T @ np.sign(A @ x - q)
            g = g - g.mean()  # tangent to the simplex
            gn = np.linalg.norm(g)
            if gn == 0:
                converged = True
                break
            x_new = project_simplex(x - step / np.sqrt(i + 1.0) * g / gn)
            moved = np.linalg.norm(x_new - x)
            x = x_new
            if moved < tol:
                converged = True
                break
        total_iter += i + 1
        fx = f(x)
        if fx < best_f:
            best_x, best_f = x.copy(), fx
        all_converged &= converged
    return TauOptimum(best_x, best_f, all_converged, total_iter, len(inits))


def pure_fidelity_decay(c: float, n: int) -> float:
    """Overlap ``cos(c / sqrt(n))^(2n)`` between n copies of two pure states.

    Tends to ``exp(-c^2)`` as n grows.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    return math.cos(c / math.sqrt(n)) ** (2 * n)
