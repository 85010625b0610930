import numpy as np
import pytest

from frozen_planet.errors import DomainError, EvaluationError
from frozen_planet.potentials import (PotentialFamily, SmoothedPotentials,
                                      cutoff_homogeneity_range, f_eps, f_eps_prime, g_eps,
                                      g_eps_prime, helium, make_family, power_law, psi,
                                      register_family, validate_hypotheses)

GRID = np.geomspace(1e-4, 1e4, 801)


def test_helium_passes_all_hypotheses():
    rep = validate_hypotheses(helium(), GRID)
    assert rep.passed, rep.failed()
    fam = helium()
    assert fam.g(1.0) == 1.0 < fam.f(1.0) == 2.0
    assert set(rep.to_dict()["checks"]) == {"decay", "monotone_convex", "homogeneity",
                                           "mountain_pass"}


def test_equal_strengths_fail_mountain_pass():
    rep = validate_hypotheses(power_law(1.0, 1.0, 1.0, 1.0, s_bar=1.0), GRID)
    assert rep.failed() == ["mountain_pass"]
    assert rep.checks["mountain_pass"].worst_s == 1.0


@pytest.mark.parametrize("alpha,beta", [(1.0, 1.0), (0.5, 1.5), (1.5, 1.5), (1.0, 2.0)])
def test_power_laws_with_beta_ge_alpha_pass(alpha, beta):
    fam = power_law(2.0, alpha, 1.0, beta)
    assert validate_hypotheses(fam, GRID).passed
    s = GRID
    assert np.all(np.abs(s * fam.df(s) + alpha * fam.f(s)) <= 1e-12 * fam.f(s))
    err = s * fam.dg(s) + alpha * fam.g(s) - (alpha - beta) * fam.g(s)
    assert np.all(np.abs(err) <= 1e-12 * fam.g(s))


def test_beta_below_alpha_fails_homogeneity():
    rep = validate_hypotheses(power_law(2.0, 1.0, 1.0, 0.5), GRID)
    assert "homogeneity" in rep.failed()


def test_alpha_two_fails_homogeneity_range():
    rep = validate_hypotheses(power_law(2.0, 2.0, 1.0, 2.0), GRID)
    assert rep.failed() == ["homogeneity"]
    assert "outside" in rep.checks["homogeneity"].detail


def test_non_decaying_family_fails_decay():
    base = helium()
    fam = PotentialFamily(lambda s: 2.0 / s + 1.0, base.df, base.d2f, base.g, base.dg,
                          base.d2g, alpha=1.0, s_bar=1.0)
    assert "decay" in validate_hypotheses(fam, GRID).failed()


def test_non_finite_evaluation_names_the_point():
    base = helium()
    fam = PotentialFamily(lambda s: np.where(s > 1.0, 2.0 / s, np.nan), base.df, base.d2f,
                          base.g, base.dg, base.d2g, alpha=1.0, s_bar=2.0)
    with pytest.raises(EvaluationError, match="s="):
        validate_hypotheses(fam, GRID)


@pytest.mark.parametrize("grid", [[], [0.0, 1.0], [2.0, 1.0]])
def test_bad_grids_rejected(grid):
    with pytest.raises(ValueError):
        validate_hypotheses(helium(), grid)


def test_f_eps_branches():
    sp = SmoothedPotentials(power_law(1.0, 1.0, 1.0, 1.0), 0.1, 0.1)
    assert f_eps(sp, 0.2) == pytest.approx(5.0, rel=1e-15)
    assert f_eps(sp, 0.0) == pytest.approx(20.0, rel=1e-14)
    assert f_eps(sp, -0.5) == pytest.approx(25.0, rel=1e-14)
    assert f_eps(sp, -0.1) == pytest.approx(25.0, rel=1e-14)
    # tangent line inside [0, eps1]
    assert f_eps_prime(sp, 0.05) == pytest.approx(-100.0)


def test_psi_examples():
    assert psi(0.1, -0.2) == 1.0
    assert psi(0.1, 0.0) == 0.5
    assert psi(0.1, 0.05) == pytest.approx(0.125)
    assert psi(0.1, 0.3) == 0.0


def test_psi_monotone_convex_c1():
    e = 0.1
    s = np.linspace(-0.3, 0.3, 6001)
    v = psi(e, s)
    assert np.all(np.diff(v) <= 1e-15)
    inner = s[(s >= 0) & (s <= e)]
    assert np.all(np.diff(psi(e, inner), 2) >= -1e-10)
    h = 1e-7
    for x in (-e, 0.0, e):
        left = (psi(e, x) - psi(e, x - h)) / h
        right = (psi(e, x + h) - psi(e, x)) / h
        assert abs(left - right) < 1e-5


def test_g_eps_examples():
    sp = SmoothedPotentials(power_law(1.0, 1.0, 1.0, 1.0), 0.1, 0.1)
    assert g_eps(sp, 0.2) == pytest.approx(5.0)
    assert g_eps(sp, 0.05) == pytest.approx(70.0)
    s = np.linspace(1e-3, 0.1, 200)
    assert np.all(g_eps(sp, s) >= psi(0.1, s) / s ** 2)
    with pytest.raises(DomainError):
        g_eps(sp, 0.0)
    with pytest.raises(DomainError):
        g_eps_prime(sp, np.array([0.1, -1.0]))


def test_junction_smoothness():
    sp = SmoothedPotentials(power_law(1.0, 1.0, 1.0, 1.0), 0.1, 0.1)
    e = sp.eps1
    h = 1e-9
    for x in (-e, 0.0, e):
        assert abs(f_eps_prime(sp, x + h) - f_eps_prime(sp, x - h)) < 1e-5 * 100
        assert abs(f_eps(sp, x + h) - f_eps(sp, x - h)) < 1e-6
    assert f_eps(sp, -5.0) == f_eps(sp, -1.0)
    s = np.linspace(0.2, 5, 50)
    np.testing.assert_allclose(f_eps(sp, s), 1.0 / s, rtol=1e-15)
    np.testing.assert_allclose(g_eps(sp, s), 1.0 / s, rtol=1e-15)


def test_derivatives_match_differences():
    sp = SmoothedPotentials(helium(), 0.1, 0.2)
    s = np.linspace(-0.3, 2.0, 977)
    h = 1e-6
    fd = (sp.f_eps(s + h) - sp.f_eps(s - h)) / (2 * h)
    np.testing.assert_allclose(sp.df_eps(s), fd, atol=1e-5 * np.abs(fd).max())
    sg = np.linspace(0.01, 2.0, 977)
    fd = (sp.g_eps(sg + h) - sp.g_eps(sg - h)) / (2 * h)
    np.testing.assert_allclose(sp.dg_eps(sg), fd, rtol=1e-5, atol=1e-6)
    fd2 = (sp.dg_eps(sg + h) - sp.dg_eps(sg - h)) / (2 * h)
    off = np.abs(sg - sp.eps2) > 2 * h
    np.testing.assert_allclose(sp.d2g_eps(sg)[off], fd2[off], rtol=1e-4)


def test_regularized_invariants_on_grid():
    sp = SmoothedPotentials(helium(), 1e-2, 1e-2)
    s = np.linspace(-0.05, 3.0, 4001)
    a = sp.alpha
    assert np.all(s * sp.df_eps(s) + a * sp.f_eps(s) >= -1e-12 * np.abs(sp.f_eps(s)).max())
    pos = s[s >= 0]
    assert np.all(np.diff(sp.f_eps(pos), 2) >= -1e-10)
    sg = np.geomspace(1e-4, 3.0, 2001)
    assert np.all(np.diff(sp.g_eps(sg), 2) >= -1e-10)
    assert np.all(np.diff(sp.g_eps(sg)) < 0)


def test_cutoff_homogeneity_range_reports_valid_prefix():
    sp = SmoothedPotentials(helium(), 1e-2, 1e-2)
    grid = np.geomspace(1e-5, 1.0, 400)
    s_max, margins = cutoff_homogeneity_range(sp, grid)
    assert s_max is not None and s_max > 1e-5
    ok = grid <= s_max
    assert np.all(margins[ok] >= -1e-12)
    # above the cutoff the original homogeneous g holds again with equality
    assert np.all(margins[grid >= 1e-2] >= -1e-12)


def test_registry_and_make_family():
    register_family("test_soft", lambda scale=1.0: power_law(2.0 * scale, 1.0, scale, 1.0))
    fam = make_family("test_soft", {"scale": 3.0})
    assert fam.f(1.0) == pytest.approx(6.0)
    with pytest.raises(ValueError):
        make_family("no_such_family")
    with pytest.raises(ValueError):
        power_law(a=-1.0)
    assert make_family("power_law", {"a": 2, "alpha": 1, "b": 1, "beta": 1}).is_power_law
