"""Kernel backend selection and deterministic row-parallel dispatch.

The compiled extension is used for power-law families when it imports;
everything else goes through the numpy implementation.  The environment
variable ``FROZEN_PLANET_BACKEND`` forces a choice: ``python`` always uses
numpy, ``compiled`` fails loudly if the extension is missing, ``auto``
(default) picks the extension when present.
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_choice = os.environ.get("FROZEN_PLANET_BACKEND", "auto").strip().lower()
if _choice not in ("auto", "python", "compiled"):
    raise ImportError(f"FROZEN_PLANET_BACKEND must be auto, python or compiled, got {_choice!r}")
if _choice == "compiled" and _compiled is None:
    raise ImportError("FROZEN_PLANET_BACKEND=compiled but the extension is not built")

_state = {"use_compiled": _compiled is not None and _choice != "python", "workers": 1}

# rows per task when a batch is split over threads
_CHUNK = 4


def compiled_available() -> bool:
    return _compiled is not None


def using_compiled() -> bool:
    return _state["use_compiled"]


def name() -> str:
    return "compiled" if _state["use_compiled"] else "python"


def set_backend(which: str) -> None:
    """Switch between ``"compiled"`` and ``"python"`` at run time."""
    if which == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available")
        _state["use_compiled"] = True
    elif which == "python":
        _state["use_compiled"] = False
    else:
        raise ValueError(f"unknown backend {which!r}")


def set_workers(n: int) -> None:
    if int(n) < 1:
        raise ValueError("workers must be >= 1")
    _state["workers"] = int(n)


def get_workers() -> int:
    return _state["workers"]


def _one(sp, mu, dt, Q1, Q2, pinned, grad):
    params = sp.kernel_params()
    if _state["use_compiled"] and params is not None:
        return _compiled.action_batch(params, mu, dt, Q1, Q2,
                                      np.asarray(pinned, dtype=np.uint8), grad)
    return _kernels_py.action_batch(sp, mu, dt, Q1, Q2, pinned, grad)


def action_batch(sp, mu, dt, Q1, Q2, pinned, grad=True):
    """Evaluate rows independently; results do not depend on the worker count."""
    Q1 = np.atleast_2d(np.asarray(Q1, dtype=float))
    Q2 = np.atleast_2d(np.asarray(Q2, dtype=float))
    pinned = np.atleast_1d(np.asarray(pinned, dtype=bool))
    m = Q1.shape[0]
    workers = _state["workers"]
    if workers <= 1 or m <= _CHUNK:
        res = [_one(sp, mu, dt, Q1, Q2, pinned, grad)]
    else:
        bounds = [(i, min(i + _CHUNK, m)) for i in range(0, m, _CHUNK)]
        with ThreadPoolExecutor(max_workers=workers) as ex:
            res = list(ex.map(lambda b: _one(sp, mu, dt, Q1[b[0]:b[1]], Q2[b[0]:b[1]],
                                              pinned[b[0]:b[1]], grad), bounds))
    values = np.concatenate([r[0] for r in res])
    if not grad:
        return values, None, None
    return values, np.vstack([r[1] for r in res]), np.vstack([r[2] for r in res])


def hessian_diagonals(sp, mu, dt, q1, q2):
    params = sp.kernel_params()
    if _state["use_compiled"] and params is not None:
        return _compiled.hessian_diagonals(params, mu, dt, q1, q2)
    return _kernels_py.hessian_diagonals(sp, mu, dt, q1, q2)
