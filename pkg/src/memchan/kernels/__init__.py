"""Hot-loop kernels with a compiled core and a numpy fallback.

The compiled backend (`_fast`, Cython) is used when its extension module
imports; otherwise the numpy reference backend (`_ref`) takes over. Set
MEMCHAN_KERNELS=ref or MEMCHAN_KERNELS=fast to force one (forcing `fast`
raises if the extension was not built). `benchmarks/bench_kernels.py`
compares the two.
"""

import os

from . import _ref

_choice = os.environ.get("MEMCHAN_KERNELS", "auto").lower()
if _choice not in ("auto", "fast", "ref"):
    raise ValueError(f"MEMCHAN_KERNELS must be auto, fast or ref, not {_choice!r}")

if _choice == "ref":
    _impl = _ref
    BACKEND = "ref"
else:
    try:
        from . import _fast as _impl

        BACKEND = "fast"
    except ImportError:
        if _choice == "fast":
            raise
        _impl = _ref
        BACKEND = "ref"

single_bin_amplitudes = _impl.single_bin_amplitudes
clamped_walk = _impl.clamped_walk
knn_predict = _impl.knn_predict
minmax_windows = _impl.minmax_windows


def backends():
    """All importable backends as {name: module}, for tests and benchmarks."""
    found = {"ref": _ref}
    try:
        from . import _fast

        found["fast"] = _fast
    except ImportError:
        pass
    return found
