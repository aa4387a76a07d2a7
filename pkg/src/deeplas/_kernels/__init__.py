"""Hot kernels: compiled Cython build when available, numpy fallback otherwise.

Set ``DEEPLAS_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _fallback

if os.environ.get("DEEPLAS_PURE_PYTHON", "") not in ("", "0"):
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _fallback
        BACKEND = "python"

lstm_forward = _impl.lstm_forward
lstm_backward = _impl.lstm_backward
col2im = _impl.col2im
edit_ops = _impl.edit_ops

__all__ = ["BACKEND", "lstm_forward", "lstm_backward", "col2im", "edit_ops"]
