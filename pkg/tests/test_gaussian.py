import numpy as np
import pytest

from telebench import fock, gaussian
from telebench.errors import DomainError


def test_variance_roundtrip():
    for s in (0.0, 0.2, 0.5, 0.9):
        assert gaussian.variance_to_s(gaussian.s_to_variance(s)) == pytest.approx(s, abs=1e-14)
    with pytest.raises(DomainError):
        gaussian.variance_to_s(0.3)


def test_bloch_to_s_gives_variance_half_over_r0():
    r0 = 0.4
    assert gaussian.s_to_variance(gaussian.bloch_to_s(r0)) == pytest.approx(1 / (2 * r0))


def test_heterodyne_sample_statistics():
    rng = np.random.default_rng(1)
    st = gaussian.GaussianMode(1 - 0.5j, 0.5)
    z = gaussian.heterodyne_sample(st, rng, 40000)
    assert abs(z.mean() - st.mean) < 0.03
    assert np.mean(np.abs(z - st.mean) ** 2) == pytest.approx(2.0, rel=0.03)


def test_beamsplitter_keeps_temperature():
    t, r = gaussian.beamsplitter_split(gaussian.GaussianMode(2.0, 0.3), 0.6)
    assert t.mean == pytest.approx(0.8 * 2.0)
    assert r.mean == pytest.approx(0.6 * 2.0)
    assert t.s_param == r.s_param == 0.3


def test_amplifier_variance_formula():
    assert gaussian.amplifier_variance(1.0, 0.5) == pytest.approx(1.0)
    t = np.sqrt(1 - 0.05 ** 2)
    assert gaussian.amplifier_variance(t, 0.5) > 1.0
    out = gaussian.amplify(gaussian.GaussianMode(t * 1.5, 1 / 3), t, 0.5)
    assert out.mean == pytest.approx(1.5)


def test_amplifier_penalty_vanishes_with_delta():
    prev = None
    for delta in (0.3, 0.1, 0.03, 0.01):
        t = np.sqrt(1 - delta ** 2)
        V = gaussian.amplifier_variance(t, 0.5)
        gap = V - 1.0
        if prev is not None:
            assert gap < prev
        prev = gap
    assert prev < 1e-2


def test_fock_amplifier_matches_gain_variance():
    s, G = 0.3, 1.4
    rho = np.diag(fock.thermal_state(s, 40)).astype(complex)
    out = gaussian.amplify_fock(rho, G, 90)
    assert np.trace(out).real == pytest.approx(1.0, abs=1e-9)
    V_out = fock.quadrature_variance(out)
    assert V_out == pytest.approx(gaussian.gain_variance(gaussian.s_to_variance(s), G), abs=1e-7)


def test_fock_amplifier_scales_mean():
    G = 1.25
    rho = fock.displaced_thermal(0.5, 0.2, 50)
    out = gaussian.amplify_fock(rho, G, 90)
    assert fock.mean_amplitude(out) == pytest.approx(np.sqrt(G) * 0.5, abs=1e-8)


def test_gain_one_is_identity():
    rho = fock.displaced_thermal(0.3j, 0.2, 20)
    assert np.allclose(gaussian.amplify_fock(rho, 1.0), rho)
