import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import poisson

from telebench import fock
from telebench.errors import ConfigurationError, DomainError, ShapeError


def test_thermal_populations_geometric():
    p = fock.thermal_state(0.5, 60)
    assert p[0] == pytest.approx(0.5)
    assert np.allclose(p[1:] / p[:-1], 0.5)
    assert p.sum() == pytest.approx(1 - 0.5 ** 60, abs=1e-15)


@pytest.mark.parametrize("s", [-0.1, 1.0, 1.5])
def test_thermal_rejects_bad_s(s):
    with pytest.raises(DomainError):
        fock.thermal_state(s, 10)


def test_tail_bound_and_truncation():
    N = fock.choose_truncation(0.5)
    assert fock.tail_bound(0.5, N) < 1e-10
    assert fock.tail_bound(0.5, N - 1) >= 1e-10
    assert fock.choose_truncation(0.1, 3.0) >= 9 + 18 + 9


def test_coherent_state_is_poisson():
    z = 1.3 - 0.4j
    N = 60
    pops = np.abs(fock.coherent_state(z, N)) ** 2
    assert np.allclose(pops, poisson.pmf(np.arange(N), abs(z) ** 2), atol=1e-15)


def test_displacement_of_vacuum():
    z = 0.7 + 0.2j
    D = fock.displacement_operator(z, 80)
    vac = np.zeros(80)
    vac[0] = 1
    assert np.allclose((D @ vac)[:40], fock.coherent_state(z, 80)[:40], atol=1e-13)


def test_displaced_thermal_moments():
    z, s = 1 + 1j, 0.3
    rho = fock.displaced_thermal(z, s, 60)
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-10)
    assert fock.mean_amplitude(rho) == pytest.approx(z, abs=1e-9)
    assert fock.quadrature_variance(rho) == pytest.approx((1 + s) / (2 * (1 - s)), abs=1e-8)


def test_displaced_thermal_truncation_covers_tail():
    z, s = 0.8, 0.4
    N = fock.displaced_thermal_truncation(z, s)
    assert 1 - np.trace(fock.displaced_thermal(z, s, N)).real < 1e-10
    assert N >= fock.choose_truncation(s, z)


def test_trace_norm_examples():
    a = np.diag([1.0, 0.0])
    b = np.diag([0.0, 1.0])
    assert fock.trace_norm_distance(a, b) == pytest.approx(2.0)
    assert fock.trace_norm_distance(a, a) == 0.0
    with pytest.raises(ShapeError):
        fock.trace_norm_distance(np.eye(2) / 2, np.eye(3) / 3)


def test_trace_norm_pure_states():
    # ||psi - phi||_1 = 2 sqrt(1 - |<psi|phi>|^2)
    psi = fock.coherent_state(0.5, 40)
    phi = fock.coherent_state(-0.3j, 40)
    ov = abs(np.vdot(psi, phi)) ** 2
    d = fock.trace_norm_distance(np.outer(psi, psi.conj()), np.outer(phi, phi.conj()))
    assert d == pytest.approx(2 * np.sqrt(1 - ov), abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.01, 0.95))
def test_heterodyne_prepare_thermal_law(s):
    N = fock.choose_truncation(1 / (2 - s)) + 5
    out = fock.heterodyne_prepare_channel(np.diag(fock.thermal_state(s, N)), method="exact", N=N)
    assert np.allclose(out, fock.thermal_state(1 / (2 - s), N), atol=1e-12)


def test_heterodyne_prepare_coherent_input():
    z = 0.6 - 0.9j
    psi = fock.coherent_state(z, 70)
    out = fock.heterodyne_prepare_exact(np.outer(psi, psi.conj()), 40)
    assert np.allclose(out, fock.displaced_thermal(z, 0.5, 40), atol=1e-12)


def test_heterodyne_prepare_is_trace_preserving_on_stacks():
    rng = np.random.default_rng(4)
    A = rng.normal(size=(3, 6, 6)) + 1j * rng.normal(size=(3, 6, 6))
    rho = A @ np.swapaxes(A.conj(), 1, 2)
    rho /= np.trace(rho, axis1=1, axis2=2).real[:, None, None]
    out = fock.heterodyne_prepare_exact(rho, 80)
    assert np.allclose(np.trace(out, axis1=1, axis2=2).real, 1.0, atol=1e-12)
    single = fock.heterodyne_prepare_exact(rho[1], 80)
    assert np.allclose(out[1], single)


def test_q_function_normalised():
    rho = fock.displaced_thermal(0.5, 0.3, 40)
    x = np.linspace(-6, 6, 241)
    X, Y = np.meshgrid(x, x)
    Q = fock.q_function(rho, X + 1j * Y)
    assert Q.sum() * (x[1] - x[0]) ** 2 == pytest.approx(1.0, abs=1e-6)


def test_q_sampler_moments():
    rng = np.random.default_rng(0)
    s = 1 / 3
    rho = fock.displaced_thermal(0.4 + 0.2j, s, 40)
    z = fock.sample_q_function(rho, 20000, rng)
    assert abs(z.mean() - (0.4 + 0.2j)) < 0.03
    assert np.mean(np.abs(z - z.mean()) ** 2) == pytest.approx(1 / (1 - s), rel=0.05)


def test_mc_requires_rng():
    with pytest.raises(ConfigurationError):
        fock.heterodyne_prepare_channel(None, 0.5, method="mc")


def test_mc_stderr_formula_matches_sampling():
    rng = np.random.default_rng(11)
    s, N, M = 0.5, 20, 50000
    _, se = fock.heterodyne_prepare_channel(None, s, method="mc", rng=rng, samples=M, N=N,
                                            return_stderr=True)
    exact = fock.heterodyne_prepare_mc_stderr(s, N, M)
    assert np.allclose(se[:10], exact[:10], rtol=0.05)
