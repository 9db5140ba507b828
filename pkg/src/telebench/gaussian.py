"""Moment description of one-mode displaced thermal states and the Gaussian
primitives used by the lower-bound construction (heterodyne, beamsplitter,
amplifier)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fock
from .errors import DomainError


@dataclass(frozen=True)
class GaussianMode:
    """Displaced thermal state: mean amplitude ``mean = <a>`` and thermal parameter."""

    mean: complex
    s_param: float

    def __post_init__(self):
        if not 0.0 <= self.s_param < 1.0:
            raise DomainError(f"thermal parameter must lie in [0, 1), got {self.s_param}")
        object.__setattr__(self, "mean", complex(self.mean))

    @property
    def variance(self) -> float:
        """Quadrature variance ``(1 + s) / (2 (1 - s))``."""
        return s_to_variance(self.s_param)


@dataclass(frozen=True)
class ClassicalGaussian:
    mean: float
    variance: float

    def __post_init__(self):
        if self.variance < 0:
            raise DomainError("variance must be nonnegative")


def s_to_variance(s: float) -> float:
    return (1.0 + s) / (2.0 * (1.0 - s))


def variance_to_s(V: float) -> float:
    """Inverse of :func:`s_to_variance`; ``V = 1/2`` is the vacuum."""
    if V < 0.5 - 1e-15:
        raise DomainError(f"unphysical quadrature variance {V} < 1/2")
    return max(0.0, (2.0 * V - 1.0) / (2.0 * V + 1.0))


def bloch_to_s(r0: float) -> float:
    """Thermal parameter ``(1 - r0)/(1 + r0)`` of the limit oscillator."""
    return (1.0 - r0) / (1.0 + r0)


def heterodyne_sample(state: GaussianMode, rng: np.random.Generator, size=None):
    """Heterodyne outcomes of a displaced thermal state.

    Outcomes are complex normal with mean ``state.mean`` and
    ``E|zeta - mean|^2 = 1/(1 - s)``.
    """
    var = 1.0 / (1.0 - state.s_param)
    draw = fock._complex_normal(rng, 1 if size is None else size, var)
    out = state.mean + draw
    return complex(out[0]) if size is None else out


def beamsplitter_split(state: GaussianMode, reflectivity: float):
    """Mix with a thermal state of the same ``s`` on a beamsplitter.

    Returns ``(transmitted, reflected)`` with means ``t z`` and ``delta z``,
    ``t = sqrt(1 - delta^2)``; both outputs keep the thermal parameter.
    """
    d = float(reflectivity)
    if not 0.0 <= d <= 1.0:
        raise DomainError(f"reflectivity must lie in [0, 1], got {d}")
    t = np.sqrt(1.0 - d * d)
    return (GaussianMode(t * state.mean, state.s_param),
            GaussianMode(d * state.mean, state.s_param))


def amplifier_variance(t: float, r0: float) -> float:
    """``t^-2 / (2 r0) + (t^-1 - 1) / 2``."""
    return t ** -2 / (2.0 * r0) + (1.0 / t - 1.0) / 2.0


def amplify(state: GaussianMode, t: float, r0: float) -> GaussianMode:
    """Amplifier that undoes a beamsplitter transmissivity ``t``.

    The mean is rescaled by ``1/t`` and the output variance is
    :func:`amplifier_variance`. The input is expected to carry variance
    ``1/(2 r0)``.
    """
    if t <= 0 or t > 1:
        raise DomainError(f"transmissivity must lie in (0, 1], got {t}")
    if not 0 < r0 <= 1:
        raise DomainError(f"r0 must lie in (0, 1], got {r0}")
    V = amplifier_variance(t, r0)
    return GaussianMode(state.mean / t, variance_to_s(V))


def gain_variance(V_in: float, gain: float) -> float:
    """Output quadrature variance of a phase-insensitive amplifier of power gain ``gain``."""
    return gain * V_in + (gain - 1.0) / 2.0


def to_fock(state: GaussianMode, N: int) -> np.ndarray:
    return fock.displaced_thermal(state.mean, state.s_param, N)


def amplifier_kraus(gain: float, N_in: int, N_out: int) -> list:
    """Kraus operators of the phase-insensitive amplifier with power gain ``gain >= 1``.

    ``A_k = sqrt((1 - 1/G)^k / k!) (a^dag)^k G^{-(n+1)/2}``, truncated to
    ``N_out x N_in``.
    """
    if gain < 1:
        raise DomainError("amplifier gain must be >= 1")
    from scipy.special import gammaln
    n = np.arange(N_in)
    ops = []
    if gain == 1.0:
        A = np.zeros((N_out, N_in))
        m = min(N_in, N_out)
        A[np.arange(m), np.arange(m)] = 1.0
        return [A]
    lg = np.log(gain)
    lx = np.log(1.0 - 1.0 / gain)
    for k in range(N_out):
        A = np.zeros((N_out, N_in))
        rows = n + k
        ok = rows < N_out
        # (a^dag)^k |n> = sqrt((n+k)!/n!) |n+k>
        logv = (0.5 * k * lx - 0.5 * gammaln(k + 1) + 0.5 * (gammaln(n + k + 1) - gammaln(n + 1))
                - 0.5 * (n + 1) * lg)
        A[rows[ok], n[ok]] = np.exp(logv[ok])
        ops.append(A)
    return ops


def amplify_fock(rho: np.ndarray, gain: float, N_out: int | None = None) -> np.ndarray:
    """Apply the amplifier channel to a truncated density matrix."""
    rho = np.asarray(rho)
    N_in = rho.shape[0]
    N_out = N_in if N_out is None else N_out
    out = np.zeros((N_out, N_out), dtype=complex)
    for A in amplifier_kraus(gain, N_in, N_out):
        out += A @ rho @ A.T
    return 0.5 * (out + out.conj().T)
