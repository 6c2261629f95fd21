"""Pick the compiled kernels when available.

Set ``CLUSTERENS_PURE_PYTHON=1`` to force the numpy fallback.
"""

import os

from clusterens.cforest import _kernels_py

BACKEND = "python"
kernels = _kernels_py

if os.environ.get("CLUSTERENS_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from clusterens.cforest import _kernels as _compiled
    except ImportError:
        pass
    else:
        kernels = _compiled
        BACKEND = "compiled"
