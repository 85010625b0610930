import numpy as np
import pytest

from frozen_planet import _backend
from frozen_planet.action import ActionContext, batch_evaluate
from frozen_planet.potentials import PotentialFamily, SmoothedPotentials, helium


def test_set_backend_rejects_unknown():
    with pytest.raises(ValueError):
        _backend.set_backend("fortran")
    with pytest.raises(ValueError):
        _backend.set_workers(0)


def test_backend_name_follows_switch():
    before = _backend.name()
    try:
        _backend.set_backend("python")
        assert _backend.name() == "python" and not _backend.using_compiled()
        if _backend.compiled_available():
            _backend.set_backend("compiled")
            assert _backend.name() == "compiled"
    finally:
        _backend.set_backend(before)


def _batch(n=64, rows=23, seed=3):
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, 1.0, n + 1)
    Q1 = np.sin(0.5 * np.pi * t)[None, :] * rng.uniform(0.5, 1.5, (rows, 1))
    Q1[::2, 0] = 0.0
    Q1[1::2, 0] = 0.05
    Q2 = 2.5 + 0.2 * rng.standard_normal((rows, n + 1))
    return Q1, Q2


@pytest.mark.parametrize("workers", [2, 3, 8])
def test_batch_independent_of_workers(backend, helium_sp, workers):
    ctx = ActionContext(helium_sp, 1.0, 1.0, 64)
    Q1, Q2 = _batch()
    ref = batch_evaluate(ctx, Q1, Q2)
    try:
        _backend.set_workers(workers)
        got = batch_evaluate(ctx, Q1, Q2)
    finally:
        _backend.set_workers(1)
    for a, b in zip(ref, got):
        assert np.array_equal(a, b)


def test_non_power_law_uses_python_kernels():
    base = helium()
    fam = PotentialFamily(f=base.f, df=base.df, d2f=base.d2f, g=base.g,
                          dg=base.dg, d2g=base.d2g, alpha=1.0, s_bar=base.s_bar)
    sp_custom = SmoothedPotentials(fam, 1e-2, 1e-2)
    sp_ref = SmoothedPotentials(base, 1e-2, 1e-2)
    assert sp_custom.kernel_params() is None
    Q1, Q2 = _batch()
    a = batch_evaluate(ActionContext(sp_custom, 1.0, 1.0, 64), Q1, Q2)
    b = batch_evaluate(ActionContext(sp_ref, 1.0, 1.0, 64), Q1, Q2)
    for x, y in zip(a, b):
        np.testing.assert_allclose(x, y, rtol=1e-11, atol=1e-11)
