"""Adaptive measure-and-prepare protocol for n qubits and the lower-bound gadget.

The protocol localises the state with a small batch of Pauli measurements,
maps the remaining qubits to the Gaussian model with ``channel_T``,
heterodynes and reprepares there, and maps back with ``channel_S``. Distances
are taken on the qubits left after localisation.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import benchmark, fock, gaussian
from .errors import ConfigurationError, DomainError, PreconditionError
from .lan import (HybridState, LanConfig, channel_S, channel_T, channel_T_quantum, default_grid,
                  gaussian_target, lan_distances, u_of_alpha)
from .schur_weyl import (Block, BlockDecomposition, QubitModel, block_l1, decompose_bloch,
                         rotation_matrix, rotation_to, spin_rotation)

MIN_PROB = 1e-15
FAILURE_CHARGE = 2.0


def localization_budget(n: int, epsilon: float) -> int:
    return int(math.ceil(n ** (1.0 - epsilon)))


def localize(true_r, n: int, epsilon: float, rng: np.random.Generator) -> dict:
    """Estimate the Bloch vector from ``ceil(n^(1-eps))`` qubits split over three axes.

    Each sub-batch measures one Pauli operator; outcomes are binomial with
    ``P(+1) = (1 + r_a)/2``. The estimate is clipped into the open unit ball.
    """
    if rng is None:
        raise ConfigurationError("localisation requires a seeded generator")
    budget = localization_budget(n, epsilon)
    if n ** (1.0 - epsilon) < 30:
        raise PreconditionError(f"n^(1-eps) = {n ** (1 - epsilon):.1f} < 30")
    if budget >= n:
        raise PreconditionError("localisation would consume every qubit")
    r = np.asarray(true_r, dtype=float)
    sizes = [budget // 3 + (1 if a < budget % 3 else 0) for a in range(3)]
    est = np.empty(3)
    for a in range(3):
        k = rng.binomial(sizes[a], 0.5 * (1.0 + r[a]))
        est[a] = 2.0 * k / sizes[a] - 1.0
    norm = np.linalg.norm(est)
    cap = 1.0 - 1.0 / budget
    if norm > cap:
        est *= cap / norm
    radius = n ** (-0.5 + epsilon)
    return {"r_hat": est, "qubits_used": budget,
            "success": bool(np.linalg.norm(est - r) <= radius), "radius": radius}


@dataclass(frozen=True)
class Frame:
    """Local coordinates: ``n`` qubits, reference length ``r0``, rotation taking +z to the reference."""

    n: int
    r0: float
    axis: tuple
    angle: float

    @classmethod
    def from_reference(cls, n: int, r_ref) -> "Frame":
        r_ref = np.asarray(r_ref, dtype=float)
        axis, angle = rotation_to(r_ref)
        return cls(n, float(np.linalg.norm(r_ref)), tuple(axis), float(angle))

    def to_local(self, r) -> np.ndarray:
        return rotation_matrix(self.axis, self.angle).T @ np.asarray(r, dtype=float)

    def local_u(self, r) -> tuple:
        rl = self.to_local(r)
        return tuple(math.sqrt(self.n) * (rl - np.array([0.0, 0.0, self.r0])))


def lan_config_for(frame: Frame, u, N: int = 0, bins: int = 2048, epsilon: float = 0.1) -> LanConfig:
    return LanConfig(frame.n, frame.r0, tuple(u), N, default_grid(frame.n, frame.r0, u, bins), epsilon)


def gaussian_map_exact(h: HybridState, N_out: int) -> HybridState:
    """Heterodyne + coherent preparation on each slab; the classical value is kept.

    This is the average over outcomes of measuring ``(x, zeta)`` and
    preparing ``delta_x (x) |zeta><zeta|``.
    """
    out = fock.heterodyne_prepare_exact(h.slabs, N_out)
    return HybridState(h.grid, out, h.lost_mass)


def output_truncation(cfg: LanConfig) -> int:
    s_out = benchmark.reprepared_s(cfg.s)
    return max(cfg.N, fock.choose_truncation(s_out, cfg.alpha))


def map_channel_exact(decomp: BlockDecomposition, cfg: LanConfig) -> BlockDecomposition:
    """``S_n o (heterodyne-prepare) o T_n`` with the measurement averaged exactly."""
    h = channel_T(decomp, cfg)
    return channel_S(gaussian_map_exact(h, output_truncation(cfg)), cfg.n, cfg.r0)


def conditional_distance(true_r, frame: Frame, *, N: int = 0, bins: int = 2048,
                         epsilon: float = 0.1) -> float:
    """Risk of the MAP channel in ``frame`` for the true Bloch vector ``true_r``."""
    u = frame.local_u(true_r)
    cfg = lan_config_for(frame, u, N, bins, epsilon)
    d = decompose_bloch(frame.to_local(true_r), frame.n, MIN_PROB)
    return block_l1(map_channel_exact(d, cfg), d)


@dataclass
class ProtocolRun:
    model: QubitModel
    epsilon: float = 0.1
    mc_samples: int = 200
    seed: int = 0
    fock_N: int = 0
    grid_bins: int = 2048
    localize: bool = True
    estimator: str = "exact"
    bootstrap: int = 1000
    evaluate_failures: bool = False

    def __post_init__(self):
        if self.mc_samples < 1:
            raise DomainError("mc_samples must be >= 1")
        if not 0.0 < self.epsilon < 0.5:
            raise DomainError("epsilon must lie in (0, 1/2)")
        if self.estimator not in ("exact", "sampled"):
            raise DomainError(f"unknown estimator {self.estimator!r}")

    def config(self) -> dict:
        m = self.model
        return {"n": m.n, "r0": m.r0, "u": list(m.u), "epsilon": self.epsilon,
                "mc_samples": self.mc_samples, "seed": self.seed, "fock_N": self.fock_N,
                "grid_bins": self.grid_bins, "localize": self.localize,
                "estimator": self.estimator, "bootstrap": self.bootstrap}

    def config_hash(self) -> str:
        blob = json.dumps(self.config(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class RiskReport:
    n: int
    r0: float
    u: list
    s: float
    risk: float
    stderr: float
    benchmark: float
    seed: int
    config_hash: str
    details: dict = field(default_factory=dict)

    def to_json(self, **kw) -> str:
        return json.dumps(asdict(self), sort_keys=True, **kw)


def _bootstrap_mean_se(values: np.ndarray, B: int, rng) -> float:
    if values.size < 2:
        return float("inf") if values.size else 0.0
    idx = rng.integers(0, values.size, size=(B, values.size))
    return float(values[idx].mean(axis=1).std(ddof=1))


def _streams(seed: int, k: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(k)]


def run_map_protocol(run: ProtocolRun) -> RiskReport:
    """Monte Carlo risk of the adaptive protocol against ``rho^{(x) n_lan}``.

    ``estimator="exact"`` averages the heterodyne outcome exactly for every
    localisation draw and averages the per-draw distances (an upper bound on
    the distance of the averaged output). ``estimator="sampled"`` draws one
    outcome per sample, reprepares, maps back to the lab frame and measures
    the distance of the empirical average. Failed localisations count 2.
    """
    model = run.model
    n = model.n
    true_r = model.bloch
    loc_rng, mc_rng, boot_rng = _streams(run.seed, 3)

    frames, success = [], []
    if run.localize:
        n_lan = n - localization_budget(n, run.epsilon)
        for _ in range(run.mc_samples):
            loc = localize(true_r, n, run.epsilon, loc_rng)
            frames.append(Frame.from_reference(n_lan, loc["r_hat"]))
            success.append(loc["success"])
    else:
        n_lan = n
        ref = Frame.from_reference(n, [0.0, 0.0, model.r0])
        frames = [ref] * run.mc_samples
        success = [True] * run.mc_samples
    success = np.array(success)
    kw = dict(N=run.fock_N, bins=run.grid_bins, epsilon=run.epsilon)

    details = {"n_lan": n_lan, "failure_rate": float(1.0 - success.mean()),
               "estimator": run.estimator, "localize": run.localize}
    if run.estimator == "exact":
        values = np.full(run.mc_samples, FAILURE_CHARGE)
        cache: dict = {}
        uncharged = []
        for i, fr in enumerate(frames):
            if not success[i] and not run.evaluate_failures:
                continue
            if fr not in cache:
                cache[fr] = conditional_distance(true_r, fr, **kw)
            if success[i]:
                values[i] = cache[fr]
            uncharged.append(cache[fr])
        risk = float(values.mean())
        stderr = 0.0 if len(set(values.tolist())) == 1 else _bootstrap_mean_se(values, run.bootstrap, boot_rng)
        if uncharged:
            details["conditional_mean"] = float(np.mean(uncharged))
    else:
        risk, stderr, extra = _sampled_risk(run, true_r, frames, success, n_lan, mc_rng, boot_rng, kw)
        details.update(extra)
    risk = min(max(risk, 0.0), 2.0)
    return RiskReport(n, model.r0, list(model.u), model.s, risk, stderr,
                      benchmark.optimal_risk(model.s), run.seed, run.config_hash(), details)


def _sampled_risk(run, true_r, frames, success, n_lan, mc_rng, boot_rng, kw):
    """Empirical average of single-outcome repreparations, rotated to the lab frame."""
    contributions = []  # (sample index, 2j, block matrix in lab frame)
    hybrids: dict = {}
    for i, fr in enumerate(frames):
        if not success[i]:
            continue
        if fr not in hybrids:
            u = fr.local_u(true_r)
            cfg = lan_config_for(fr, u, kw["N"], kw["bins"], kw["epsilon"])
            d = decompose_bloch(fr.to_local(true_r), fr.n, MIN_PROB)
            hybrids[fr] = (cfg, channel_T(d, cfg))
        cfg, h = hybrids[fr]
        masses = h.classical_masses()
        k = mc_rng.choice(masses.size, p=np.clip(masses, 0, None) / np.clip(masses, 0, None).sum())
        zeta = fock.sample_q_function(h.slabs[k], 1, mc_rng)[0]
        Nz = fock.choose_truncation(0.0, zeta)
        prep = np.zeros((h.grid.bins, Nz, Nz), dtype=complex)
        psi = fock.coherent_state(zeta, Nz)
        prep[k] = np.outer(psi, psi.conj()) / h.grid.dx
        out = channel_S(HybridState(h.grid, prep), fr.n, fr.r0)
        for tj, b in out.blocks.items():
            U = spin_rotation(tj, fr.axis, fr.angle)
            contributions.append((i, tj, b.probability * (U @ b.rho @ U.conj().T)))
    target = decompose_bloch(true_r, n_lan, MIN_PROB)
    M = len(frames)

    def risk_for(weights: np.ndarray) -> float:
        sums: dict = {}
        for i, tj, B in contributions:
            if weights[i]:
                sums[tj] = sums.get(tj, 0) + weights[i] * B
        fail = float(weights[~success].sum())
        ok = float(weights[success].sum())
        blocks = {tj: Block(tj, 1, 1.0, S) for tj, S in sums.items()}
        avg = BlockDecomposition(n_lan, blocks)
        scaled = BlockDecomposition(n_lan, {tj: Block(tj, 1, ok * b.probability, b.rho)
                                            for tj, b in target.blocks.items()})
        return FAILURE_CHARGE * fail + block_l1(avg, scaled)

    w0 = np.full(M, 1.0 / M)
    risk = risk_for(w0)
    if M < 2:
        return risk, float("inf"), {}
    reps = []
    for _ in range(min(run.bootstrap, 200)):
        counts = np.bincount(boot_rng.integers(0, M, size=M), minlength=M)
        reps.append(risk_for(counts / M))
    return risk, float(np.std(reps, ddof=1)), {"bootstrap_mean": float(np.mean(reps))}


# ---------------------------------------------------------------- lower bound


def protocol_candidate(decomp: BlockDecomposition, cfg: LanConfig) -> BlockDecomposition:
    """The protocol's own MAP in a known frame (no localisation)."""
    return map_channel_exact(decomp, cfg)


def fixed_state_candidate(decomp: BlockDecomposition, cfg: LanConfig) -> BlockDecomposition:
    """Ignore the input and prepare the maximally mixed state."""
    return decompose_bloch([0.0, 0.0, 0.0], decomp.n)


@dataclass
class GadgetReport:
    risk: float
    stderr: float
    benchmark: float
    slack: dict
    in_model_fraction: float

    @property
    def total_slack(self) -> float:
        return float(sum(self.slack.values()))

    @property
    def bound_holds(self) -> bool:
        return self.risk + 3 * self.stderr >= self.benchmark - self.total_slack

    @property
    def slack_small(self) -> bool:
        return self.total_slack < 0.1 * self.benchmark


def _readout_and_amplify(d_out: BlockDecomposition, gain: float, s_amp: float, mean: complex,
                         cap: int = 160) -> tuple:
    """``T^{(q)}`` followed by the amplifier; returns ``(state, discarded trace)``."""
    rho = channel_T_quantum(d_out)
    tail = 1.0 - np.cumsum(np.diagonal(rho).real)
    hit = np.nonzero(tail < 1e-12)[0]
    N_in = min(int(hit[0]) + 1 if hit.size else rho.shape[0], cap)
    rho = rho[:N_in, :N_in]
    lost = 1.0 - np.trace(rho).real
    N_out = max(N_in, fock.displaced_thermal_truncation(mean, s_amp)) + 10
    amp = gaussian.amplify_fock(rho, gain, N_out)
    lost += np.trace(rho).real - np.trace(amp).real
    return amp, max(lost, 0.0)


def lower_bound_gadget(s: float, delta: float, n: int, candidate=protocol_candidate, *,
                       rng: np.random.Generator, samples: int = 200, alpha: complex = 0.0,
                       epsilon: float = 0.1, N: int = 0, bins: int = 2048) -> GadgetReport:
    """Turn a qubit MAP into a MAP for displaced thermal states ``Phi_alpha(s)``.

    A beamsplitter of reflectivity delta sends part of the mode to a heterodyne,
    giving ``alpha0 = zeta/delta``. The residual ``t (alpha - alpha0)`` sets the
    local parameter for ``S_n``; the candidate acts, ``T_n`` returns the quantum
    part and an amplifier of gain ``t^-2`` undoes the loss. Draws whose local
    parameter leaves ``||u|| <= n^eps`` are charged 2. Slack terms bound how much
    the qubit risk can undercut the Gaussian one.
    """
    if not 0.0 < delta < 1.0:
        raise DomainError(f"reflectivity must lie in (0, 1), got {delta}")
    if not 0.0 < s < 1.0:
        raise DomainError(f"s must lie in (0, 1), got {s}")
    if rng is None:
        raise ConfigurationError("the gadget requires a seeded generator")
    r0 = (1.0 - s) / (1.0 + s)
    t = math.sqrt(1.0 - delta ** 2)
    gain = t ** -2
    L = n ** epsilon
    state = gaussian.GaussianMode(alpha, s)
    trans, refl = gaussian.beamsplitter_split(state, delta)
    zetas = gaussian.heterodyne_sample(refl, rng, samples)
    alpha0 = zetas / delta
    resid = t * (alpha - alpha0)
    V = gaussian.s_to_variance(s)
    s_amp = gaussian.variance_to_s(gaussian.gain_variance(V, gain))
    values = np.full(samples, FAILURE_CHARGE)
    inside = np.zeros(samples, dtype=bool)
    for i, a in enumerate(resid):
        ux, uy = u_of_alpha(a, r0)
        u = (ux, uy, 0.0)
        if math.hypot(ux, uy) > L:
            continue
        inside[i] = True
        cfg = LanConfig(n, r0, u, N, default_grid(n, r0, u, bins), epsilon)
        target = gaussian_target(u, r0, cfg)
        d_in = channel_S(target, n, r0)
        d_out = candidate(d_in, cfg)
        amp, lost = _readout_and_amplify(d_out, gain, s_amp, a / t)
        ref = fock.displaced_thermal(a / t, s, amp.shape[0])
        values[i] = min(fock.trace_norm(amp - ref) + lost, FAILURE_CHARGE)
    risk = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(samples)) if samples > 1 else float("inf")
    slack = {
        "amplifier": benchmark.geometric_l1(s, s_amp, 500),
        "lan_T": 0.0,
        "lan_S": 0.0,
        "localization": FAILURE_CHARGE * (1.0 - _inside_probability(s, delta, r0, L)),
    }
    for u in ((0.0, 0.0, 0.0), (L, 0.0, 0.0), (0.0, L, 0.0)):
        cfg = LanConfig(n, r0, u, N, default_grid(n, r0, u, bins), epsilon)
        dist = lan_distances(cfg)
        slack["lan_T"] = max(slack["lan_T"], dist["dist_T"])
        slack["lan_S"] = max(slack["lan_S"], dist["dist_S"])
    return GadgetReport(risk, se, benchmark.optimal_risk(s), slack, float(inside.mean()))


def _inside_probability(s: float, delta: float, r0: float, L: float) -> float:
    """``P(||u'|| <= L)``: ``|u'|^2`` is exponential with mean ``4 r0 t^2 / ((1-s) delta^2)``."""
    t2 = 1.0 - delta ** 2
    mean = 4.0 * r0 * t2 / ((1.0 - s) * delta ** 2)
    return -math.expm1(-L * L / mean)
