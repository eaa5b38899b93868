"""Pick the compiled kernels if they were built, else the numpy fallback.

Set ``GBE_TRANSFER_PURE=1`` to force the fallback (used by the benchmark and
the backend-equivalence tests).
"""

import logging
import os

from . import _fallback

log = logging.getLogger(__name__)

_force_pure = os.environ.get("GBE_TRANSFER_PURE", "") not in ("", "0")

kernels = _fallback
name = "python"

if not _force_pure:
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]

        name = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        log.debug("compiled kernels unavailable, using numpy fallback")

compiled = name == "cython"
