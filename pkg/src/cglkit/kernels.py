"""Backend selection for the hot kernels.

Imports the compiled extension when present; otherwise (or when
``CGLKIT_PURE_PYTHON=1``) falls back to the numpy implementations.
``BACKEND`` records which one is active.
"""

import os

from . import _core_py

if os.environ.get("CGLKIT_PURE_PYTHON") == "1":
    _impl = _core_py
    BACKEND = "python"
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _core_py
        BACKEND = "python"

csr_dense_matmul = _impl.csr_dense_matmul
edge_jaccard = _impl.edge_jaccard
