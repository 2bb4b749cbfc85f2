"""Compiled resampling core and its pure-Python twin.

``resample`` is the compiled module when the extension was built, otherwise
the numpy fallback. Set ``FREQVIT_PURE=1`` to force the fallback. Both
perform the same float64 operations in the same order, so results agree
bit for bit.
"""

import os

from . import _resample_py

BACKEND = "python"
resample = _resample_py

if os.environ.get("FREQVIT_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _resample_c as resample  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        pass

__all__ = ["BACKEND", "resample"]
