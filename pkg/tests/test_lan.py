import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from telebench import fock, lan
from telebench import schur_weyl as sw
from telebench.errors import CoverageError, DegenerateInputError, ShapeError, TruncationError


def random_density(rng, d):
    A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = A @ A.conj().T
    return rho / np.trace(rho).real


def random_decomposition(rng, n):
    tjs = sw.valid_two_j(n)
    p = rng.dirichlet(np.ones(len(tjs)))
    return sw.BlockDecomposition(n, {t: sw.Block(t, sw.multiplicity(n, t), float(pk), random_density(rng, t + 1))
                                     for t, pk in zip(tjs, p)})


def test_isometry_maps_highest_weight_to_vacuum():
    rho = np.zeros((5, 5))
    rho[0, 0] = 1
    out = lan.fock_isometry_apply(rho, 8)
    assert out[0, 0] == 1 and np.trace(out) == 1
    w = np.array([0.5, 0.3, 0.2])
    assert np.allclose(np.diag(lan.fock_isometry_apply(np.diag(w), 6)).real, [0.5, 0.3, 0.2, 0, 0, 0])
    with pytest.raises(TruncationError):
        lan.fock_isometry_apply(np.eye(5) / 5, 4)


def test_coisometry_inverts_isometry():
    rng = np.random.default_rng(0)
    rho = random_density(rng, 4)
    back, lost = lan.fock_coisometry_apply(lan.fock_isometry_apply(rho, 10), 3)
    assert np.allclose(back, rho) and lost == pytest.approx(0, abs=1e-15)


def test_kernel_centre_mass_and_variance():
    assert lan.rescaled_spin(100, 50, 0.5) == 0.0
    grid = lan.Grid(-3, 3, 4096)
    m = lan.smoothing_kernel(100, 50, 0.5, grid)
    assert m.sum() == pytest.approx(1.0, abs=1e-10)
    x = grid.centers
    var = np.sum(m * x ** 2) - np.sum(m * x) ** 2
    assert var == pytest.approx(1 / (2 * math.sqrt(100)), rel=0.01)
    with pytest.raises(CoverageError):
        lan.smoothing_kernel(100, 50, 0.5, lan.Grid(-0.1, 0.1, 10))


def test_config_checks():
    cfg = lan.LanConfig(16, 0.5)
    assert cfg.N >= fock.choose_truncation(cfg.s)
    with pytest.raises(TruncationError):
        lan.LanConfig(16, 0.5, N=3)
    with pytest.raises(CoverageError):
        lan.LanConfig(16, 0.5, grid=lan.Grid(-1, 1, 100))


def test_channel_T_single_qubit():
    cfg = lan.LanConfig(1, 0.5)
    d = sw.decompose(sw.QubitModel(0.5, n=1))
    h = lan.channel_T(d, cfg)
    assert h.total_mass() == pytest.approx(1.0, abs=1e-10)
    q = h.quantum_marginal()
    assert np.allclose(q[2:, 2:], 0)
    assert h.min_eigenvalue() > -1e-10


@settings(max_examples=10, deadline=None)
@given(st.integers(2, 12), st.integers(0, 10**6))
def test_channel_T_conserves_mass(n, seed):
    d = random_decomposition(np.random.default_rng(seed), n)
    cfg = lan.LanConfig(n, 0.5, N=max(n + 1, 21))
    h = lan.channel_T(d, cfg)
    assert h.total_mass() == pytest.approx(1.0, abs=1e-10)
    assert h.min_eigenvalue() > -1e-10


def test_channel_T_quantum_equals_marginal():
    d = sw.decompose(sw.QubitModel(0.5, (0.5, 0.2, 0), 20))
    cfg = lan.LanConfig(20, 0.5, (0.5, 0.2, 0))
    q1 = lan.channel_T(d, cfg).quantum_marginal()
    q2 = lan.channel_T_quantum(d, cfg.N)
    assert np.allclose(q1, q2, atol=1e-12)


def test_gaussian_target_moments():
    u, r0 = (0.8, -0.4, 0.3), 0.5
    cfg = lan.LanConfig(64, r0, u)
    h = lan.gaussian_target(u, r0, cfg)
    assert fock.mean_amplitude(h.quantum_marginal()) == pytest.approx(lan.alpha_of_u(u, r0), abs=1e-8)
    m = h.classical_masses()
    x = cfg.grid.centers
    mean = np.sum(m * x)
    assert mean == pytest.approx(0.3, abs=1e-6)
    var = np.sum(m * x ** 2) - mean ** 2
    assert var == pytest.approx(1 - r0 ** 2, abs=1e-4)


def test_alpha_matches_collective_spin():
    m = sw.QubitModel(0.5, (0.9, -0.6, 0.0), 400)
    assert sw.collective_spin_moments(m)["alpha"] == pytest.approx(lan.alpha_of_u(m.u, 0.5))


def test_T_quantum_mean_approaches_alpha():
    u = (1.0, 0.5, 0.0)
    errs = []
    for n in (50, 200):
        d = sw.decompose(sw.QubitModel(0.5, u, n))
        q = lan.channel_T_quantum(d, 40)
        errs.append(abs(fock.mean_amplitude(q) - lan.alpha_of_u(u, 0.5)))
    assert errs[1] < errs[0] < 0.1


def test_j_of_x_rounding():
    n, r0 = 16, 0.5
    assert lan.j_of_x(0.0, n, r0) == 8
    # half-way point between 2j = 8 and 10 rounds up
    assert lan.j_of_x(1 / 4, n, r0) == 10
    assert lan.j_of_x(-100, n, r0) == 0
    assert lan.j_of_x(100, n, r0) == 16
    assert lan.j_of_x(-100, 15, r0) == 1


def test_bin_assignment_partitions_bins():
    grid = lan.Grid(-2, 2, 37)
    parts = lan._bin_assignment(grid, 16, 0.5)
    tot = np.zeros(grid.bins)
    for k, _, f in parts:
        tot[k] += f
    assert np.allclose(tot, 1.0)


def test_channel_S_on_target():
    n = 64
    cfg = lan.LanConfig(n, 0.5)
    d = lan.channel_S(lan.gaussian_target((0, 0, 0), 0.5, cfg), n, 0.5)
    assert d.total_probability() == pytest.approx(1.0, abs=1e-10)
    peak = max(d.blocks, key=lambda t: d.blocks[t].probability)
    assert abs(peak - n * 0.5) <= 2
    for b in d.blocks.values():
        assert np.trace(b.rho).real == pytest.approx(1.0)


def test_channel_S_empty_raises():
    grid = lan.Grid(-1, 1, 4)
    with pytest.raises(DegenerateInputError):
        lan.channel_S(lan.HybridState(grid, np.zeros((4, 3, 3))), 8, 0.5)


def test_hybrid_l1_properties():
    cfg = lan.LanConfig(16, 0.5)
    h = lan.gaussian_target((0, 0, 0), 0.5, cfg)
    assert lan.hybrid_l1(h, h) == 0.0
    rho = fock.displaced_thermal(0, cfg.s, cfg.N)
    m1 = cfg.grid.normal_masses(0, 0.75)
    m2 = cfg.grid.normal_masses(0.5, 0.75)
    h1 = lan.HybridState.product(cfg.grid, m1, rho)
    h2 = lan.HybridState.product(cfg.grid, m2, rho)
    assert lan.hybrid_l1(h1, h2) == pytest.approx(np.abs(m1 - m2).sum() * np.trace(rho).real, rel=1e-9)
    assert lan.hybrid_l1(h1, h2) <= 2
    other = lan.HybridState(lan.Grid(-1, 1, cfg.grid.bins), h1.slabs)
    with pytest.raises(ShapeError):
        lan.hybrid_l1(h1, other)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10**6))
def test_T_is_contractive(seed):
    rng = np.random.default_rng(seed)
    n = 6
    x, y = random_decomposition(rng, n), random_decomposition(rng, n)
    cfg = lan.LanConfig(n, 0.5, N=21)
    assert lan.hybrid_l1(lan.channel_T(x, cfg), lan.channel_T(y, cfg)) <= sw.block_l1(x, y) + 1e-9


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10**6))
def test_S_is_contractive(seed):
    # every bin maps to 2j >= 8 and slabs use 3 levels, so no compression occurs
    rng = np.random.default_rng(seed)
    n, r0 = 16, 0.5
    grid = lan.Grid(0.0, 1.0, 16)

    def random_hybrid():
        w = rng.dirichlet(np.ones(grid.bins))
        slabs = np.stack([wk * random_density(rng, 3) / grid.dx for wk in w])
        return lan.HybridState(grid, slabs)

    h1, h2 = random_hybrid(), random_hybrid()
    d1, d2 = lan.channel_S(h1, n, r0), lan.channel_S(h2, n, r0)
    assert d1.dropped_mass == pytest.approx(0, abs=1e-15)
    assert sw.block_l1(d1, d2) <= lan.hybrid_l1(h1, h2) + 1e-9


def test_convergence_trend_small():
    rows = lan.lan_convergence_scan([16, 32, 64], (0, 0, 0), 0.5, bins=1024)
    dT = [r["dist_T"] for r in rows]
    dS = [r["dist_S"] for r in rows]
    assert dT[0] > dT[1] > dT[2]
    assert dS[0] > dS[1] > dS[2]


def test_scan_csv_and_model_flag():
    rows = lan.lan_convergence_scan([16], (3.0, 0, 0), 0.5, bins=512)
    assert rows[0]["in_model"] is False
    buf = io.StringIO()
    lan.write_scan_csv(rows, buf)
    header = buf.getvalue().splitlines()[0]
    assert header == ",".join(lan.SCAN_COLUMNS)
