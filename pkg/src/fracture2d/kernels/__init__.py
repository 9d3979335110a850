"""Hot element-integration kernels with a compiled core and a numpy fallback.

The four batched integration routines dominate assembly time.  At import the
Cython extension is preferred when present; set ``FRACTURE2D_PURE_PYTHON=1``
to force the numpy implementation.  Both backends compute identical results
in fixed element order (see tests and benchmarks/kernel_benchmark.py).
"""

import os

from . import py_backend

BACKEND = "python"
_impl = py_backend

if not os.environ.get("FRACTURE2D_PURE_PYTHON"):
    try:
        from . import _ckern as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        pass


def available_backends():
    """Name -> module for every importable backend."""
    out = {"python": py_backend}
    try:
        from . import _ckern

        out["compiled"] = _ckern
    except ImportError:
        pass
    return out


u_internal_force = _impl.u_internal_force
u_stiffness = _impl.u_stiffness
scalar_residual = _impl.scalar_residual
scalar_stiffness = _impl.scalar_stiffness
