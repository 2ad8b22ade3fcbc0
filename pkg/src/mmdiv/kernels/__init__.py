"""Kernel backend selection.

The compiled Cython core is preferred; the numpy fallback is selected when the
extension is missing or when MMDIV_BACKEND=fallback is set in the environment.
Both expose the same two functions with identical semantics.
"""

import os

from . import fallback

__all__ = ["value_terms", "deriv_terms", "BACKEND", "get_backend"]

_choice = os.environ.get("MMDIV_BACKEND", "auto")

if _choice == "fallback":
    _impl = fallback
    BACKEND = "fallback"
else:
    try:
        from . import _core as _impl
        BACKEND = "compiled"
    except ImportError:
        if _choice == "compiled":
            raise
        _impl = fallback
        BACKEND = "fallback"

value_terms = _impl.value_terms
deriv_terms = _impl.deriv_terms


def get_backend(name: str = "auto"):
    """Return (module, backend_name) for an explicit backend request."""
    if name == "fallback":
        return fallback, "fallback"
    if name == "compiled":
        from . import _core
        return _core, "compiled"
    if name != "auto":
        raise ValueError(f"unknown backend {name!r} "
                         "(expected auto, compiled or fallback)")
    return _impl, BACKEND
