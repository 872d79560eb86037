"""Backend selection for the hot loops.

The compiled extension is used when importable; set ``QAMINE_PURE_PYTHON=1``
to force the numpy fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("QAMINE_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _kernels_py

BACKEND: str = _impl.BACKEND
best_split_gini = _impl.best_split_gini
best_split_sse = _impl.best_split_sse
sgd_epoch = _impl.sgd_epoch


def max_threads() -> int:
    """Worker cap from ``QAMINE_THREADS`` (default 1)."""
    raw = os.environ.get("QAMINE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1
