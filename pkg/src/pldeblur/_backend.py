"""Select the compiled kernels when importable, else the pure-Python fallback.

Set ``PLDEBLUR_BACKEND=python`` to force the fallback.
"""
import logging
import os

from . import _fallback

log = logging.getLogger(__name__)


def load(name=None):
    name = name or os.environ.get("PLDEBLUR_BACKEND", "auto")
    if name == "python":
        return _fallback
    try:
        from . import _kernels
    except ImportError as exc:
        if name == "cython":
            raise
        log.debug("compiled kernels unavailable (%s); using pure-Python fallback", exc)
        return _fallback
    return _kernels


kernels = load()
BACKEND = kernels.NAME
