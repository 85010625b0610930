import json

import numpy as np
import pytest

from frozen_planet.action import ActionContext, action_gradient, action_value
from frozen_planet.errors import ConfigError, DomainError, NoConvergenceError
from frozen_planet.mountainpass import (H1Metric, MinimaxConfig, _pack, _residual, _unpack,
                                        build_endpoints, deform, diagnostics_crossing,
                                        initial_path, jacobian_bands, refine_critical_point)
from frozen_planet.trajectory import PathOfTrajectories, Trajectory, min_gap
from frozen_planet.verify import ode_residual


def test_config_validation():
    with pytest.raises(ConfigError):
        MinimaxConfig(M=16)
    with pytest.raises(ConfigError):
        MinimaxConfig(c_lo=2.0, C_hi=1.0)
    with pytest.raises(ConfigError):
        MinimaxConfig(step0=0.0)
    with pytest.raises(ConfigError):
        MinimaxConfig(band=0.0)


def test_endpoints_geometry(helium_brake, helium_ctx, helium_result):
    lo, hi, info = build_endpoints(helium_brake, helium_ctx, MinimaxConfig(), return_info=True)
    a = helium_brake.a
    assert action_value(helium_ctx, lo) < a < helium_result.report.c_est
    assert info["A_hi"] - a <= 0.1 * info["gap_est"]
    assert min_gap(lo)[0] > 0 and min_gap(hi)[0] > 0
    np.testing.assert_array_equal(lo.q1, helium_brake.q)
    assert np.all(lo.q2 == info["c_lo"]) and np.all(hi.q2 == info["C_hi"])


def test_endpoint_hi_level_decays_with_doubling(helium_brake, helium_ctx):
    q = helium_brake.q
    excess = [action_value(helium_ctx, Trajectory(1.0, q, np.full(q.size, C))) - helium_brake.a
              for C in 4.0 * 2.0 ** np.arange(8)]
    assert np.all(np.diff(excess) < 0) and excess[-1] > 0


def test_endpoint_lo_is_pulled_towards_brake(helium_brake, helium_ctx):
    cfg = MinimaxConfig(c_lo=10.0 * helium_brake.w, C_hi=100.0 * helium_brake.w)
    lo, _, info = build_endpoints(helium_brake, helium_ctx, cfg, return_info=True)
    assert info["c_lo"] < 10.0 * helium_brake.w
    assert action_value(helium_ctx, lo) < helium_brake.a


def test_zero_charge_endpoints_are_a_config_error(helium_brake, helium_ctx):
    with pytest.raises(ConfigError):
        build_endpoints(helium_brake, helium_ctx.with_mu(0.0), MinimaxConfig())


def test_endpoint_below_amplitude_rejected(helium_brake, helium_ctx):
    with pytest.raises(ConfigError):
        build_endpoints(helium_brake, helium_ctx, MinimaxConfig(c_lo=0.5 * helium_brake.w))


def test_linear_initial_path_gap_profile_monotone(helium_brake, helium_ctx):
    lo, hi = build_endpoints(helium_brake, helium_ctx, MinimaxConfig())
    for path in (initial_path(lo, hi, 40), initial_path(lo, hi, 40, helium_ctx, 20.0)):
        prof = diagnostics_crossing(path)
        assert np.all(np.diff(prof) > 0)
        assert prof[0] == pytest.approx(min_gap(lo)[0]) and prof[-1] == pytest.approx(min_gap(hi)[0])


def test_deform_report(helium_result):
    rep = helium_result.report
    hist = rep.level_history
    assert np.all(np.diff(hist) <= 1e-12 * np.maximum(1.0, np.abs(hist[:-1])))
    assert rep.c_est > rep.a_eps and rep.margin > 0
    assert rep.status in ("converged", "stalled", "step_floor")
    d = json.loads(rep.to_json())
    for key in ("c_est", "a_eps", "grad_norm_at_max", "iters", "level_history", "margin"):
        assert key in d


def test_deform_keeps_endpoints_bit_identical(helium_result, helium_brake, helium_ctx):
    lo, hi = build_endpoints(helium_brake, helium_ctx, MinimaxConfig())
    path = helium_result.path
    for a, b in ((path.endpoint_lo, lo), (path.endpoint_hi, hi)):
        assert a.q1.tobytes() == b.q1.tobytes() and a.q2.tobytes() == b.q2.tobytes()


def test_post_deform_path_crosses_every_gap_level(helium_result):
    prof = diagnostics_crossing(helium_result.path)
    for d in np.linspace(prof[0], prof[-1], 9)[1:-1]:
        assert prof.min() <= d <= prof.max()
        # a discrete chain from below d to above d has a consecutive pair bracketing d
        assert np.any((prof[:-1] - d) * (prof[1:] - d) <= 0)


def test_deform_fixed_point(helium_result, helium_ctx):
    sol = helium_result.solution.traj
    path = PathOfTrajectories(tuple([sol] * 33))
    out, rep = deform(path, helium_ctx, MinimaxConfig(M=32))
    assert rep.iters == 0 and rep.status == "converged"
    for a, b in zip(out.nodes, path.nodes):
        assert a.q1.tobytes() == b.q1.tobytes() and a.q2.tobytes() == b.q2.tobytes()


def test_deform_path_must_match_context(helium_result, helium_sp):
    ctx = ActionContext(helium_sp, 1.0, 1.0, 256)
    with pytest.raises(ValueError):
        deform(helium_result.path, ctx, MinimaxConfig())


def test_refined_solution(helium_result, helium_ctx):
    sol = helium_result.solution
    rep = helium_result.report
    g = action_gradient(helium_ctx, sol.traj).max_abs()
    assert g < 1e-9
    # second-difference residual over interior nodes
    assert ode_residual(sol).max_3pt < 1e-5
    assert action_value(helium_ctx, sol.traj) == pytest.approx(rep.c_est, rel=1e-4)
    assert rep.c_est > rep.a_eps


def test_refine_raises_with_best_iterate(helium_result, helium_ctx):
    start = helium_result.report.maximizer
    with pytest.raises(NoConvergenceError) as ei:
        refine_critical_point(start, helium_ctx, tol=1e-30, max_iters=1)
    assert isinstance(ei.value.best, Trajectory)
    assert "grad_inf" in ei.value.diagnostics


def test_refine_preconditions(helium_result, helium_ctx):
    tr = helium_result.report.maximizer
    unpinned = Trajectory(tr.T, np.r_[0.1, tr.q1[1:]], tr.q2)
    with pytest.raises(DomainError):
        refine_critical_point(unpinned, helium_ctx)
    with pytest.raises(ValueError):
        refine_critical_point(tr, helium_ctx, loose=1e-12)


def test_jacobian_matches_gradient_differences(helium_result, helium_sp):
    ctx = ActionContext(helium_sp, 1.0, 1.0, 32)
    t = np.linspace(0, 1, 33)
    q1 = np.sin(0.5 * np.pi * t) ** (2 / 3)
    q2 = 2.5 - 0.4 * t ** 2
    ab = jacobian_bands(ctx, q1, q2)
    N = ab.shape[1]
    J = np.zeros((N, N))
    for k in range(-2, 3):
        i = np.arange(max(0, -k), min(N, N - k))
        J[i, i + k] = ab[2 - k, i + k]
    h = 1e-6
    x0 = _pack(q1, q2)
    for j in range(N):
        e = np.zeros(N)
        e[j] = h
        p1, p2 = _unpack(x0 + e)
        m1, m2 = _unpack(x0 - e)
        col = (_residual(ctx, p1, p2) - _residual(ctx, m1, m2)) / (2 * h)
        np.testing.assert_allclose(J[:, j], col, rtol=1e-5, atol=1e-6 * np.abs(J).max())


def test_h1_metric_riesz_inverts_apply():
    m = H1Metric(1.0, 64)
    rng = np.random.default_rng(0)
    v1 = rng.standard_normal((3, 65))
    v1[:, 0] = 0.0
    v2 = rng.standard_normal((3, 65))
    g1, g2 = m.apply(v1, v2)
    u1, u2 = m.riesz(g1, g2)
    np.testing.assert_allclose(u1, v1, atol=1e-10)
    np.testing.assert_allclose(u2, v2, atol=1e-10)
    np.testing.assert_allclose(m.dual_norm(g1, g2), m.norm((v1, v2)), rtol=1e-10)
