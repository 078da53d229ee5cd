"""Backend selection for the right-hand-side kernel.

The compiled Cython kernel is preferred when its extension imported
cleanly; the pure-Python twin is the fallback. ``MHTES_BACKEND`` overrides
the choice: ``compiled`` demands the extension (and raises if it is
missing), ``pure`` forces the fallback, ``auto``/unset picks automatically.
Both backends are bit-identical by construction, so the override only
trades speed.
"""

from __future__ import annotations

import logging
import os

from . import _purefallback

log = logging.getLogger(__name__)

_ENV_VAR = "MHTES_BACKEND"


def _select():
    choice = os.environ.get(_ENV_VAR, "auto").strip().lower() or "auto"
    if choice not in ("auto", "pure", "compiled"):
        raise ValueError(
            f"{_ENV_VAR} must be 'auto', 'pure', or 'compiled', got {choice!r}"
        )
    if choice == "pure":
        return _purefallback, "pure"
    try:
        from . import _kernels
    except ImportError as exc:
        if choice == "compiled":
            raise ImportError(
                f"{_ENV_VAR}=compiled but the compiled kernel failed to import: {exc}"
            ) from exc
        log.info("compiled kernel unavailable (%s); using pure-Python backend", exc)
        return _purefallback, "pure"
    return _kernels, "compiled"


_MODULE, BACKEND_NAME = _select()
rhs = _MODULE.rhs


def backend_name() -> str:
    """Name of the active kernel backend, 'compiled' or 'pure'."""
    return BACKEND_NAME
