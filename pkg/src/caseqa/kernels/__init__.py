"""Hot numeric kernels with a compiled core and a pure fallback.

The Cython extension is optional: when it failed to build or is missing,
the numpy implementation takes over transparently.  ``BACKEND`` names the
implementation actually in use.
"""
from __future__ import annotations

from . import _pykern

try:
    from . import _ckern as _impl

    COMPILED_AVAILABLE = True
except ImportError:  # pragma: no cover - depends on the build environment
    _impl = _pykern
    COMPILED_AVAILABLE = False

BACKEND: str = _impl.BACKEND_NAME

transe_epoch = _impl.transe_epoch

__all__ = ["transe_epoch", "BACKEND", "COMPILED_AVAILABLE", "_pykern"]
