"""Pick the compiled kernels when available, else the numpy fallback.

Set ``KMD_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

if _ckernels is not None and not os.environ.get("KMD_PURE_PYTHON"):
    impl = _ckernels
else:
    impl = _pykernels

BACKEND = impl.NAME


def available():
    """All importable backends, keyed by name."""
    mods = {"python": _pykernels}
    if _ckernels is not None:
        mods["cython"] = _ckernels
    return mods
