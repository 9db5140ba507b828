"""Truncated Fock-space numerics for a single bosonic mode.

States are plain numpy arrays: a 1-D array of populations for states that are
diagonal in the number basis, a 2-D complex array for general density
matrices. Conventions: ``a = (Q + iP)/sqrt(2)`` with ``[Q, P] = i``, coherent
states ``|z> = W_z|0>`` with ``W_z = exp(z a^dag - conj(z) a)``.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.linalg import expm
from scipy.special import gammaln

from .errors import ConfigurationError, DomainError, ShapeError, InvariantViolation

HERMITIAN_TOL = 1e-12
NEGATIVITY_TOL = 1e-10


def tail_bound(s: float, N: int) -> float:
    """Population of a thermal state with parameter ``s`` above level ``N - 1``."""
    return float(s) ** int(N)


def choose_truncation(s: float, z: complex = 0.0, tol: float = 1e-10) -> int:
    """Smallest N with ``s**N < tol`` and ``|z|^2 + 6|z| + 9 < N``."""
    if not 0.0 <= s < 1.0:
        raise DomainError(f"thermal parameter must lie in [0, 1), got {s}")
    r = abs(z)
    n_disp = int(np.floor(r * r + 6 * r + 9)) + 1
    n_tail = 1 if s == 0.0 else int(np.floor(np.log(tol) / np.log(s))) + 1
    return max(n_disp, n_tail)


def displaced_thermal_truncation(z: complex, s: float, tol: float = 1e-10) -> int:
    """Smallest N whose populations of ``displaced_thermal(z, s)`` leave a tail below ``tol``.

    Never smaller than :func:`choose_truncation`.
    """
    N0 = choose_truncation(s, z, tol)
    M = 2 * N0 + 20
    pops = np.diagonal(displaced_thermal(z, s, M)).real
    tail = 1.0 - np.cumsum(pops)
    idx = np.nonzero(tail < tol)[0]
    N = int(idx[0]) + 1 if idx.size else M
    return max(N0, N)


def annihilation(N: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, N, dtype=float)), k=1).astype(complex)


def creation(N: int) -> np.ndarray:
    return annihilation(N).conj().T


def _check_N(N) -> int:
    if int(N) != N or N < 1:
        raise DomainError(f"truncation must be a positive integer, got {N}")
    return int(N)


def thermal_state(s: float, N: int) -> np.ndarray:
    """Populations ``(1 - s) s**k`` for ``k < N``."""
    N = _check_N(N)
    if not 0.0 <= s < 1.0:
        raise DomainError(f"thermal parameter must lie in [0, 1), got {s}")
    k = np.arange(N)
    if s == 0.0:
        w = np.zeros(N)
        w[0] = 1.0
        return w
    return (1.0 - s) * np.exp(k * np.log(s))


def coherent_state(z: complex, N: int) -> np.ndarray:
    """Number-basis amplitudes of ``|z>`` truncated to N levels."""
    N = _check_N(N)
    k = np.arange(N)
    if z == 0:
        v = np.zeros(N, dtype=complex)
        v[0] = 1.0
        return v
    r, phi = abs(z), np.angle(z)
    logmag = -0.5 * r * r + k * np.log(r) - 0.5 * gammaln(k + 1)
    return np.exp(logmag + 1j * k * phi)


def coherent_populations(z: complex, N: int) -> np.ndarray:
    """Poisson weights ``exp(-|z|^2) |z|^(2k) / k!``."""
    return np.abs(coherent_state(z, N)) ** 2


def displacement_operator(z: complex, N: int) -> np.ndarray:
    """Matrix exponential of ``z a^dag - conj(z) a`` on the truncated basis.

    Only the lower levels are faithful; the unitary defect sits in the top
    few ``|z| sqrt(N)`` levels. Use :func:`displaced_thermal` for states.
    """
    N = _check_N(N)
    a = annihilation(N)
    return expm(z * a.conj().T - np.conj(z) * a)


def _padding(z: complex, N: int) -> int:
    r = abs(z)
    return int(np.ceil(r * r + 4 * r * np.sqrt(N + 1))) + 16


def displaced_thermal(z: complex, s: float, N: int) -> np.ndarray:
    """``W_z Phi(s) W_z^dag`` cropped to N levels.

    The displacement and thermal state are built in a padded basis so that
    the returned N x N corner is free of edge artefacts.
    """
    N = _check_N(N)
    M = N + _padding(z, N)
    w = thermal_state(s, M)
    if z == 0:
        return np.diag(w[:N]).astype(complex)
    W = displacement_operator(z, M)
    rho = (W * w) @ W.conj().T
    rho = rho[:N, :N]
    return 0.5 * (rho + rho.conj().T)


def mean_amplitude(rho: np.ndarray) -> complex:
    """``Tr(rho a)``."""
    rho = np.asarray(rho)
    N = rho.shape[0]
    if rho.ndim == 1:
        return 0j
    k = np.arange(1, N)
    # Tr(rho a) = sum_k sqrt(k) rho[k, k-1]
    return complex(np.sum(np.sqrt(k) * np.diagonal(rho, offset=-1)))


def quadrature_variance(rho: np.ndarray) -> float:
    """Variance of ``Q = (a + a^dag)/sqrt(2)`` in ``rho`` (truncated operators)."""
    rho = np.asarray(rho)
    if rho.ndim == 1:
        rho = np.diag(rho)
    N = rho.shape[0]
    a = annihilation(N)
    Q = (a + a.conj().T) / np.sqrt(2)
    # truncated Q^2 misses one term on the top level; callers keep that level empty
    m1 = np.trace(rho @ Q).real
    m2 = np.trace(rho @ Q @ Q).real
    return float(m2 - m1 * m1)


def _as_hermitian(A: np.ndarray, name: str) -> np.ndarray:
    A = np.asarray(A)
    if A.ndim == 1:
        return np.diag(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {A.shape}")
    scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
    if np.max(np.abs(A - A.conj().T), initial=0.0) > HERMITIAN_TOL * scale * 1e2:
        raise InvariantViolation(f"{name} is not Hermitian")
    return A


def trace_norm(X: np.ndarray) -> float:
    """Sum of absolute eigenvalues of a Hermitian matrix (or a stack of them)."""
    X = np.asarray(X)
    if X.ndim == 1:
        return float(np.abs(X).sum())
    Xh = 0.5 * (X + np.swapaxes(X.conj(), -1, -2))
    ev = np.linalg.eigvalsh(Xh)
    return float(np.abs(ev).sum())


def trace_norm_stack(X: np.ndarray) -> np.ndarray:
    """Per-matrix trace norms of a stack with shape (..., N, N)."""
    Xh = 0.5 * (X + np.swapaxes(X.conj(), -1, -2))
    return np.abs(np.linalg.eigvalsh(Xh)).sum(axis=-1)


def trace_norm_distance(A: np.ndarray, B: np.ndarray) -> float:
    """``||A - B||_1`` for Hermitian matrices or population vectors."""
    A = np.asarray(A)
    B = np.asarray(B)
    if A.ndim == 1 and B.ndim == 1:
        if A.shape != B.shape:
            raise ShapeError(f"dimension mismatch {A.shape} vs {B.shape}")
        return float(np.abs(A - B).sum())
    A = _as_hermitian(A, "A")
    B = _as_hermitian(B, "B")
    if A.shape != B.shape:
        raise ShapeError(f"dimension mismatch {A.shape} vs {B.shape}")
    return trace_norm(A - B)


@lru_cache(maxsize=32)
def _hp_kernels(n_in: int, n_out: int) -> tuple:
    """Coefficient matrices of the heterodyne-then-coherent-prepare channel.

    For offset d = k - l >= 0, output element (l + d, l) equals
    sum_b rho[b + d, b] (b+d+l)! / (2^(b+d+l+1) sqrt((b+d)! b! (l+d)! l!)).
    """
    kernels = []
    for d in range(min(n_in, n_out)):
        b = np.arange(n_in - d)[None, :]
        l = np.arange(n_out - d)[:, None]
        logc = (gammaln(b + d + l + 1) - (b + d + l + 1) * np.log(2.0)
                - 0.5 * (gammaln(b + d + 1) + gammaln(b + 1)
                         + gammaln(l + d + 1) + gammaln(l + 1)))
        kernels.append(np.exp(logc))
    return tuple(kernels)


def heterodyne_prepare_exact(rho: np.ndarray, N_out: int | None = None) -> np.ndarray:
    """Average output of heterodyning ``rho`` and preparing ``|zeta>``.

    Exact in the number basis for any (truncated) input; works on a single
    matrix or on a stack with shape (..., N, N). Output is cropped to N_out.
    """
    rho = np.asarray(rho)
    if rho.ndim == 1:
        rho = np.diag(rho).astype(complex)
    n_in = rho.shape[-1]
    n_out = n_in if N_out is None else int(N_out)
    kernels = _hp_kernels(n_in, n_out)
    out = np.zeros(rho.shape[:-2] + (n_out, n_out), dtype=complex)
    l_idx_base = np.arange(n_out)
    for d, K in enumerate(kernels):
        diag_in = np.diagonal(rho, offset=-d, axis1=-2, axis2=-1)  # rho[b+d, b]
        diag_out = diag_in @ K.T
        l = l_idx_base[: n_out - d]
        out[..., l + d, l] = diag_out
        if d:
            out[..., l, l + d] = diag_out.conj()
    return out


def q_function(rho: np.ndarray, zeta: np.ndarray) -> np.ndarray:
    """Husimi density ``<zeta|rho|zeta>/pi`` (w.r.t. d Re zeta d Im zeta)."""
    rho = np.asarray(rho)
    if rho.ndim == 1:
        rho = np.diag(rho)
    N = rho.shape[0]
    zeta = np.asarray(zeta, dtype=complex)
    flat = zeta.reshape(-1)
    k = np.arange(N)
    r = np.abs(flat)
    with np.errstate(divide="ignore", invalid="ignore"):
        logr = np.where(r > 0, np.log(np.where(r > 0, r, 1.0)), -np.inf)
        logmag = -0.5 * r[:, None] ** 2 + k[None, :] * logr[:, None] - 0.5 * gammaln(k + 1)[None, :]
    logmag[:, 0] = -0.5 * r ** 2
    amps = np.exp(logmag + 1j * k[None, :] * np.angle(flat)[:, None])  # <k|zeta>
    vals = np.einsum("zk,kl,zl->z", amps.conj(), rho, amps).real
    return (np.maximum(vals, 0.0) / np.pi).reshape(zeta.shape)


def _complex_normal(rng: np.random.Generator, size, var: float = 1.0) -> np.ndarray:
    """Box-Muller draw of circular complex normals with ``E|z|^2 = var``."""
    u1 = 1.0 - rng.random(size)  # (0, 1]
    u2 = rng.random(size)
    return np.sqrt(-var * np.log(u1)) * np.exp(2j * np.pi * u2)


def sample_q_function(rho: np.ndarray, size: int, rng: np.random.Generator,
                      max_rounds: int = 200) -> np.ndarray:
    """Heterodyne outcomes of ``rho`` by rejection against a Gaussian envelope.

    The envelope is centred at ``Tr(rho a)`` with complex variance twice the
    Husimi variance. The acceptance constant is the maximum of Q/g over a dense
    polar grid inside radius R, combined with the bound ``Q <= P(Poisson(|z|^2) < N)/pi``
    outside it; a ratio above one during sampling aborts.
    """
    if rng is None:
        raise ConfigurationError("Q-function sampling requires a seeded generator")
    rho = np.asarray(rho)
    if rho.ndim == 1:
        rho = np.diag(rho).astype(complex)
    tr = np.trace(rho).real
    rho = rho / tr
    N = rho.shape[0]
    m = mean_amplitude(rho)
    nbar = np.sum(np.arange(N) * np.diagonal(rho).real)
    var = 2.0 * max(nbar - abs(m) ** 2 + 1.0, 1.0)

    def envelope(z):
        return np.exp(-np.abs(z - m) ** 2 / var) / (np.pi * var)

    R = abs(m) + np.sqrt(var) * 8.0 + np.sqrt(N) + 4.0
    radii = np.linspace(0.0, R, 400)
    angles = np.linspace(0.0, 2 * np.pi, 96, endpoint=False)
    grid = m + radii[:, None] * np.exp(1j * angles)[None, :]
    ratio = q_function(rho, grid) / envelope(grid)
    bound = 1.25 * float(ratio.max())
    # outside radius R around m: Q <= P(Poisson(|z|^2) <= N-1)/pi with |z| >= rho - |m|
    from scipy.stats import poisson
    rr = np.linspace(R, R + 20 * np.sqrt(var) + 4 * np.sqrt(N) + 20, 2000)
    zmin = np.maximum(rr - abs(m), 0.0)
    log_ratio = poisson.logcdf(N - 1, zmin ** 2) + rr ** 2 / var + np.log(var)
    bound = max(bound, float(np.exp(np.max(log_ratio))))
    if not np.isfinite(bound):
        raise InvariantViolation("could not bound the Husimi density for rejection sampling")

    out = np.empty(0, dtype=complex)
    for _ in range(max_rounds):
        need = size - out.size
        if need <= 0:
            break
        batch = int(np.ceil(need * bound * 1.2)) + 16
        cand = m + _complex_normal(rng, batch, var)
        ratio = q_function(rho, cand) / envelope(cand)
        if np.any(ratio > bound * (1 + 1e-9)):
            raise InvariantViolation("rejection envelope bound violated")
        keep = rng.random(batch) * bound < ratio
        out = np.concatenate([out, cand[keep]])
    if out.size < size:
        raise InvariantViolation("rejection sampler did not produce enough draws")
    return out[:size]


def heterodyne_prepare_mc_stderr(s: float, N: int, samples: int) -> np.ndarray:
    """Exact per-level standard error of the Monte Carlo estimate on ``Phi(s)``.

    A sample contributes ``X_l = e^{-x} x^l / l!`` with ``x = |zeta|^2``
    exponential of mean ``v = 1/(1-s)``, so
    ``E X_l^2 = C(2l, l) v^{-1} (2 + 1/v)^{-(2l+1)}``.
    """
    v = 1.0 / (1.0 - s)
    l = np.arange(N)
    log_m2 = gammaln(2 * l + 1) - 2 * gammaln(l + 1) - np.log(v) - (2 * l + 1) * np.log(2.0 + 1.0 / v)
    p = thermal_state(1.0 / (2.0 - s), N)
    return np.sqrt(np.maximum(np.exp(log_m2) - p * p, 0.0) / samples)


def heterodyne_prepare_channel(rho, s: float | None = None, *, method: str = "analytic",
                               rng: np.random.Generator | None = None,
                               samples: int = 100_000, N: int | None = None,
                               return_stderr: bool = False, chunk: int = 20_000):
    """Heterodyne measurement followed by coherent-state preparation.

    ``method="analytic"``: input is a thermal state with parameter ``s``;
    returns ``thermal_state(1/(2 - s), N)``.
    ``method="exact"``: applies the number-basis formula to any input matrix
    and returns the output populations.
    ``method="mc"``: draws heterodyne outcomes (Gaussian sampler when ``s`` is
    given, Husimi rejection otherwise), prepares ``|zeta>`` and averages the
    populations. Requires ``rng``. With ``return_stderr`` the per-level
    standard errors are returned as well.
    """
    rho_arr = None if rho is None else np.asarray(rho)
    if N is None:
        if rho_arr is not None:
            N = rho_arr.shape[0]
        elif s is not None:
            N = choose_truncation(1.0 / (2.0 - s))
        else:
            raise ConfigurationError("truncation N is required")
    if method == "analytic":
        if s is None:
            raise ConfigurationError("analytic path needs the input thermal parameter s")
        return thermal_state(1.0 / (2.0 - s), N)
    if method == "exact":
        out = heterodyne_prepare_exact(rho_arr, N)
        return np.diagonal(out).real.copy()
    if method != "mc":
        raise ConfigurationError(f"unknown method {method!r}")
    if rng is None:
        raise ConfigurationError("Monte Carlo path requires a seeded generator")
    if s is not None:
        from .gaussian import GaussianMode, heterodyne_sample
        mean = 0j if rho_arr is None or rho_arr.ndim == 1 else mean_amplitude(rho_arr)
        zetas = heterodyne_sample(GaussianMode(mean, s), rng, size=samples)
    else:
        zetas = sample_q_function(rho_arr, samples, rng)
    acc = np.zeros(N)
    acc2 = np.zeros(N)
    for start in range(0, samples, chunk):
        z = zetas[start:start + chunk]
        k = np.arange(N)
        r2 = np.abs(z) ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            logp = -r2[:, None] + k[None, :] * np.log(r2)[:, None] - gammaln(k + 1)[None, :]
        logp[:, 0] = -r2
        pops = np.exp(logp)
        acc += pops.sum(axis=0)
        acc2 += (pops ** 2).sum(axis=0)
    mean = acc / samples
    if not return_stderr:
        return mean
    var = np.maximum(acc2 / samples - mean ** 2, 0.0) * samples / max(samples - 1, 1)
    return mean, np.sqrt(var / samples)
