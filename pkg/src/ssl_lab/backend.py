"""Kernel backend selection.

The hot elementwise/reduction kernels exist twice: a compiled Cython module
(``ssl_lab._kernels``) and a numpy fallback (``ssl_lab._kernels_py``). One is
chosen at import time, controlled by ``SSL_LAB_BACKEND``:

* ``auto`` (default) — compiled if importable, else the numpy fallback;
* ``native``         — compiled, ImportError if the extension is missing;
* ``python``         — always the numpy fallback.

``ssl_lab.backend.name`` reports the active choice. Everything outside this
module imports kernels only through here.
"""

import os

from .errors import ParameterError

_choice = os.environ.get("SSL_LAB_BACKEND", "auto").strip().lower()
if _choice not in ("auto", "native", "python"):
    raise ParameterError(
        f"SSL_LAB_BACKEND must be auto|native|python, got {_choice!r}")

if _choice == "python":
    from . import _kernels_py as _impl
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        if _choice == "native":
            raise ImportError(
                "SSL_LAB_BACKEND=native but the compiled ssl_lab._kernels "
                "extension is not available; reinstall with a C toolchain "
                "or use SSL_LAB_BACKEND=python")
        from . import _kernels_py as _impl  # type: ignore[no-redef]

name = _impl.NAME

relu_forward = _impl.relu_forward
relu_grad_mask = _impl.relu_grad_mask
srelu_forward = _impl.srelu_forward
srelu_grad_mask = _impl.srelu_grad_mask
row_norms = _impl.row_norms
batchnorm_train_forward = _impl.batchnorm_train_forward
batchnorm_backward = _impl.batchnorm_backward
