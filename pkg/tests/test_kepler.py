import numpy as np
import pytest

from frozen_planet.errors import DomainError, EvaluationError
from frozen_planet.kepler import (amplitude_of_period, brake_level_convergence, brake_orbit,
                                  brake_residual, energy_drift, level_of_amplitude,
                                  minimize_discrete_F, period_monotonicity_margin,
                                  period_of_amplitude)
from frozen_planet.potentials import PotentialFamily, SmoothedPotentials, helium

T_KEPLER = np.pi / (2 * np.sqrt(2))


def test_period_closed_form(kepler_sp):
    assert period_of_amplitude(kepler_sp, 1.0) == pytest.approx(T_KEPLER, rel=1e-8)


def test_period_scaling(kepler_sp):
    assert period_of_amplitude(kepler_sp, 4.0) == pytest.approx(
        8.0 * period_of_amplitude(kepler_sp, 1.0), rel=1e-8)


def test_period_monotone(helium_sp):
    w = np.geomspace(0.01, 10.0, 10)
    T = [period_of_amplitude(helium_sp, x) for x in w]
    assert np.all(np.diff(T) > 0)
    assert period_monotonicity_margin(helium_sp, np.geomspace(1e-4, 10.0, 500)) > 0


def test_amplitude_examples(kepler_sp):
    assert amplitude_of_period(kepler_sp, 1.0) == pytest.approx(
        (2 * np.sqrt(2) / np.pi) ** (2 / 3), rel=1e-7)
    assert amplitude_of_period(kepler_sp, T_KEPLER) == pytest.approx(1.0, rel=1e-7)


@pytest.mark.parametrize("T", [0.1, 1.0, 7.5])
def test_round_trip(helium_sp, T):
    w = amplitude_of_period(helium_sp, T)
    assert period_of_amplitude(helium_sp, w) == pytest.approx(T, rel=1e-9)


def test_domain_errors(helium_sp):
    with pytest.raises(DomainError):
        period_of_amplitude(helium_sp, 0.5 * helium_sp.eps1)
    with pytest.raises(DomainError):
        amplitude_of_period(helium_sp, -1.0)
    with pytest.raises(DomainError):
        brake_orbit(helium_sp, 1.0, 8)


def test_non_monotone_attraction_is_an_evaluation_error():
    base = helium()
    bump = PotentialFamily(lambda s: 2.0 / s - 3.0 * np.exp(-(s - 0.9) ** 2 / 1e-3),
                           base.df, base.d2f, base.g, base.dg, base.d2g, alpha=1.0, s_bar=1.0)
    sp = SmoothedPotentials(bump, 1e-3, 1e-3)
    with pytest.raises(EvaluationError):
        period_of_amplitude(sp, 1.0)


def test_brake_orbit_properties(helium_brake, helium_sp):
    b = helium_brake
    assert b.q[0] == 0.0 and b.v[-1] == 0.0
    assert b.q[-1] == b.w
    assert brake_residual(b) < 1e-7
    assert np.min(np.diff(b.q)) > 0
    assert np.all(np.diff(b.q, 2) <= 1e-12)
    assert energy_drift(b) < 1e-9
    assert b.h == pytest.approx(-helium_sp.f_eps(b.w))


def test_brake_state_reflects_about_T(helium_brake):
    t = np.array([0.3, 0.8])
    q, v = helium_brake.state(t)
    q2, v2 = helium_brake.state(2 * helium_brake.T - t)
    np.testing.assert_allclose(q, q2, rtol=1e-12)
    np.testing.assert_allclose(v, -v2, rtol=1e-12)


def test_uniqueness_proxy_against_direct_minimization():
    """Quadrature/integration and direct minimization reach the same orbit.

    The discrete minimizer carries the grid's discretization error, so the
    comparison runs where the grid resolves the regularized core.
    """
    sp = SmoothedPotentials(helium(), 0.1, 0.1)
    n = 4096
    b = brake_orbit(sp, 1.0, n)
    q = minimize_discrete_F(sp, 1.0, n)
    assert np.max(np.abs(q - b.q)) < 1e-6


def test_brake_csv(tmp_path, helium_brake):
    p = tmp_path / "b.csv"
    helium_brake.to_csv(str(p))
    assert p.read_text().splitlines()[0] == "t,q1"


def test_brake_level_convergence(helium_sp):
    sps = [helium_sp.with_eps(e, e) for e in (1e-2, 5e-3, 2.5e-3, 1.25e-3, 6.25e-4)]
    a = brake_level_convergence(sps, 1.0)
    assert np.all(np.diff(a) > 0)
    d = np.abs(np.diff(a))
    assert np.all(np.diff(d) < 0)
    # f = a/s has amplitude (2 sqrt2 / pi)^(2/3) a^(1/3) at T = 1
    fam = helium()
    w0 = (2 * np.sqrt(2) / np.pi) ** (2 / 3) * 2 ** (1 / 3)
    sp0 = SmoothedPotentials(fam, 1e-9, 1e-9)
    a0 = level_of_amplitude(sp0, amplitude_of_period(sp0, 1.0))
    assert amplitude_of_period(sp0, 1.0) == pytest.approx(w0, rel=1e-6)
    assert np.all(a <= a0)
    with pytest.raises(ValueError):
        brake_level_convergence(sps[::-1], 1.0)


def test_level_extrapolation_stable():
    # a_eps approaches a0 like sqrt(eps1): four digits need eps1 ~ 1e-8
    sps = [SmoothedPotentials(helium(), e, e) for e in (1e-8, 1e-9)]
    a = brake_level_convergence(sps, 1.0)
    assert abs(a[1] - a[0]) < 1e-4 * abs(a[1])


def test_discrete_levels(helium_sp):
    sps = [helium_sp.with_eps(e, e) for e in (1e-2, 5e-3)]
    disc = brake_level_convergence(sps, 1.0, n=512)
    assert disc.shape == (2,) and np.all(np.isfinite(disc))
