"""Kernel selection.

The compiled Cython kernels are used when the extension was built; otherwise
the numpy implementations are loaded. Set ``XQML_PURE_PYTHON=1`` to force the
fallback.
"""

import os

if os.environ.get("XQML_PURE_PYTHON", "") not in ("", "0"):
    from ._fallback import apply_diagonal, apply_matrix

    BACKEND = "python"
else:
    try:
        from ._kernels import apply_diagonal, apply_matrix

        BACKEND = "cython"
    except ImportError:  # extension not built
        from ._fallback import apply_diagonal, apply_matrix

        BACKEND = "python"

__all__ = ["BACKEND", "apply_diagonal", "apply_matrix"]
