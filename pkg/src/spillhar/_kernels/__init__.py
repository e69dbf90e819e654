"""Hot-loop kernels with backend selection at import time.

The compiled Cython core is preferred when present; the pure NumPy reference
in :mod:`._pyref` is used otherwise, or when ``SPILLHAR_PURE_PYTHON=1`` is
set.  Both backends expose the same functions with identical semantics.
"""

import os

from . import _pyref

_FORCE_PURE = os.environ.get("SPILLHAR_PURE_PYTHON", "").strip().lower() in {
    "1", "true", "yes",
}

if _FORCE_PURE:
    _impl = _pyref
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
        if not hasattr(_impl, "qvar_filter"):  # stale or partial build
            _impl = _pyref
    except ImportError:
        _impl = _pyref

BACKEND = _impl.BACKEND

garch_path = _impl.garch_path
garch_nll = _impl.garch_nll
qvar_filter = _impl.qvar_filter
gfevd_single = _impl.gfevd_single
gfevd_path = _impl.gfevd_path


def available_backends():
    """Importable backend modules, keyed by name (for tests and benchmarks)."""
    out = {"python": _pyref}
    try:
        from . import _core
        out[_core.BACKEND] = _core
    except ImportError:
        pass
    return out
