import numpy as np
import pytest

from conftest import smooth_trajectory
from frozen_planet.action import (ActionContext, action_gradient, action_value, batch_evaluate,
                                  evaluate, fd_check, homogeneity_pairing, pairing_margin)
from frozen_planet.errors import DomainError
from frozen_planet.kepler import minimize_discrete_F
from frozen_planet.potentials import SmoothedPotentials, helium, power_law
from frozen_planet.trajectory import Trajectory, l2_norm_dot


def test_constant_decoupled_action(backend, helium_sp):
    ctx = ActionContext(helium_sp, 0.0, 2.0, 64)
    tr = Trajectory.constant(2.0, 64, 1.5, 3.0)
    # q1[0] = 1.5 is not pinned, so both trapezoid ends count
    assert action_value(ctx, tr) == pytest.approx(2.0 * (2 / 1.5 + 2 / 3.0), rel=1e-14)


def test_constant_helium_action(backend):
    sp = SmoothedPotentials(helium(), 1e-6, 1e-6)
    ctx = ActionContext(sp, 1.0, 1.0, 32)
    assert action_value(ctx, Trajectory.constant(1.0, 32, 1.0, 2.0)) == pytest.approx(2.0)


def test_action_tends_to_minus_infinity_at_collision(backend, helium_sp):
    ctx = ActionContext(helium_sp, 1.0, 1.0, 32)
    vals = []
    for gap in (1e-1, 1e-2, 1e-3, 1e-4, 1e-5):
        q1 = np.r_[0.0, np.full(32, 1.0)]
        # q2 constant: the kinetic term does not depend on the gap
        q2 = np.full(33, 1.0 + gap)
        vals.append(action_value(ctx, Trajectory(1.0, q1, q2)))
    assert np.all(np.diff(vals) < 0)
    assert vals[-1] < -1e5


def test_domain_error_on_nonpositive_gap(helium_sp):
    ctx = ActionContext(helium_sp, 1.0, 1.0, 16)
    tr = Trajectory(1.0, np.r_[0.0, np.full(16, 1.0)], np.r_[np.full(16, 2.0), 1.0])
    with pytest.raises(DomainError):
        action_value(ctx, tr)
    with pytest.raises(DomainError):
        batch_evaluate(ctx, tr.q1[None], tr.q2[None])


def test_context_validation(helium_sp):
    with pytest.raises(ValueError):
        ActionContext(helium_sp, 1.5, 1.0, 16)
    ctx = ActionContext(helium_sp, 1.0, 1.0, 16)
    with pytest.raises(ValueError):
        action_value(ctx, smooth_trajectory(n=32))


def test_constant_gradient_is_trapezoid_weighted(backend, helium_sp):
    n, T = 16, 1.0
    ctx = ActionContext(helium_sp, 0.0, T, n)
    c2 = 3.0
    tr = Trajectory(T, np.r_[0.0, np.full(n, 1.0)], np.full(n + 1, c2))
    g = action_gradient(ctx, tr)
    w = np.ones(n + 1)
    w[[0, -1]] = 0.5
    np.testing.assert_allclose(g.g_q2, T / n * w * helium_sp.df_eps(c2), rtol=1e-14)
    assert g.g_q1.shape == (n,) and g.g_q2.shape == (n + 1,)


@pytest.mark.parametrize("seed", range(5))
def test_fd_check_smooth(backend, helium_sp, seed):
    ctx = ActionContext(helium_sp, 1.0, 1.0, 128)
    assert fd_check(ctx, smooth_trajectory(seed=seed), trials=10, seed=seed) < 1e-6


def test_fd_check_cutoff_active(backend):
    sp = SmoothedPotentials(helium(), 0.05, 0.2)
    ctx = ActionContext(sp, 1.0, 1.0, 128)
    t = np.linspace(0, 1, 129)
    q1 = 0.9 * np.sin(0.5 * np.pi * t)
    q2 = q1 + 0.12 + 0.05 * np.cos(3 * t)
    tr = Trajectory(1.0, q1, q2)
    assert tr.gap.min() < sp.eps2
    assert np.any(q1[1:] < sp.eps1)
    assert fd_check(ctx, tr, trials=20, seed=3) < 1e-5


def test_fd_mismatch_near_f_junction_is_truncation(helium_sp):
    """Next to the eps1 junction the mismatch is the O(h^2) difference error."""
    ctx = ActionContext(helium_sp, 1.0, 1.0, 128)
    t = np.linspace(0, 1, 129)
    q1 = 0.9 * np.sin(0.5 * np.pi * t) ** 1.5
    tr = Trajectory(1.0, q1, q1 + 0.5 + 0.3 * t)
    assert abs(q1[1] - helium_sp.eps1) < 0.25 * helium_sp.eps1
    errs = [fd_check(ctx, tr, trials=10, h=h, seed=1) for h in (2e-5, 1e-5, 5e-6)]
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios > 3.5) & (ratios < 4.5))


def test_fd_check_is_seeded(helium_sp):
    ctx = ActionContext(helium_sp, 1.0, 1.0, 128)
    tr = smooth_trajectory(seed=4)
    assert fd_check(ctx, tr, seed=11) == fd_check(ctx, tr, seed=11)


def test_decoupled_minimizer_is_critical(helium_sp):
    """mu = 0: q1 = discrete brake minimizer, q2 far away is critical in q1."""
    n, T = 128, 1.0
    q = minimize_discrete_F(helium_sp, T, n)
    ctx = ActionContext(helium_sp, 0.0, T, n)
    tr = Trajectory(T, q, np.full(n + 1, 50.0))
    g = action_gradient(ctx, tr)
    assert np.max(np.abs(g.g_q1)) < 1e-10


def test_batch_matches_single(backend, helium_sp):
    ctx = ActionContext(helium_sp, 1.0, 1.0, 128)
    trs = [smooth_trajectory(seed=s) for s in range(6)]
    Q1 = np.vstack([t.q1 for t in trs])
    Q2 = np.vstack([t.q2 for t in trs])
    vals, G1, G2 = batch_evaluate(ctx, Q1, Q2)
    for k, tr in enumerate(trs):
        v, g = evaluate(ctx, tr)
        assert vals[k] == pytest.approx(v, rel=1e-14)
        np.testing.assert_allclose(G1[k, 1:], g.g_q1, rtol=1e-13, atol=1e-15)


def test_backends_agree(helium_sp):
    from frozen_planet import _backend
    if not _backend.compiled_available():
        pytest.skip("compiled kernels not built")
    ctx = ActionContext(helium_sp, 0.7, 1.0, 128)
    tr = smooth_trajectory(seed=2)
    before = _backend.name()
    out = {}
    for b in ("python", "compiled"):
        _backend.set_backend(b)
        out[b] = evaluate(ctx, tr)
    _backend.set_backend(before)
    assert out["python"][0] == pytest.approx(out["compiled"][0], rel=1e-13)
    np.testing.assert_allclose(out["python"][1].flat(), out["compiled"][1].flat(),
                               rtol=1e-11, atol=1e-14)


def test_pairing_constant_decoupled(helium_sp):
    n, T = 32, 1.0
    ctx = ActionContext(helium_sp, 0.0, T, n)
    c1, c2 = 1.5, 3.0
    tr = Trajectory(T, np.r_[0.0, np.full(n, c1)], np.full(n + 1, c2))
    w = np.ones(n + 1) * T / n
    w[[0, -1]] *= 0.5
    expect = (w[1:].sum() * c1 * helium_sp.df_eps(c1)
              + w.sum() * c2 * helium_sp.df_eps(c2)
              + (np.r_[0.0, np.full(n, c1)][1] - 0.0) ** 2 / (T / n))
    assert homogeneity_pairing(ctx, tr) == pytest.approx(expect, rel=1e-13)


def test_pairing_in_homogeneous_region(backend):
    """f, g homogeneous of degree -alpha away from the cutoffs: pairing = |q'|^2 - alpha int U."""
    sp = SmoothedPotentials(power_law(2.0, 1.0, 1.0, 1.0), 1e-3, 1e-3)
    ctx = ActionContext(sp, 1.0, 1.0, 128)
    tr = smooth_trajectory(seed=7)
    t = tr.t
    # q1 near 0 enters the regularized region only at node 0, which is pinned
    assert tr.q1[1] > sp.eps1 and tr.gap.min() > sp.eps2
    k2 = l2_norm_dot(tr) ** 2
    value = action_value(ctx, tr)
    U = value - 0.5 * k2
    assert homogeneity_pairing(ctx, tr) == pytest.approx(k2 - ctx.sp.alpha * U, rel=1e-12)
    assert pairing_margin(ctx, tr) == pytest.approx(0.0, abs=1e-9 * abs(value))
    assert t[0] == 0.0


def test_pairing_inequality_on_random_trajectories(helium_sp):
    ctx = ActionContext(helium_sp, 1.0, 1.0, 128)
    for seed in range(10):
        tr = smooth_trajectory(seed=seed)
        assert pairing_margin(ctx, tr) >= -1e-9 * abs(action_value(ctx, tr))


def test_trapezoid_convergence_order(helium_sp):
    def value(n):
        t = np.linspace(0, 1, n + 1)
        # stays clear of the singularity so the integrand is smooth
        tr = Trajectory(1.0, 0.5 + 0.4 * np.sin(0.5 * np.pi * t), 2.5 - 0.3 * t ** 2)
        return action_value(ActionContext(helium_sp, 1.0, 1.0, n), tr)
    vals = [value(n) for n in (64, 128, 256, 512)]
    d = np.abs(np.diff(vals))
    orders = np.log2(d[:-1] / d[1:])
    assert np.all((orders > 1.8) & (orders < 2.2)), orders
