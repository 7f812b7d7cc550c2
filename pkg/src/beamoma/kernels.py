"""Select the Newmark modal kernel at import time.

The compiled extension is used when it was built; set ``BEAMOMA_PURE_PYTHON=1``
to force the numpy implementation.
"""
import os

from . import _newmark_py

BACKEND = "python"
newmark_modal = _newmark_py.newmark_modal

if os.environ.get("BEAMOMA_PURE_PYTHON", "").strip() not in ("1", "true", "yes"):
    try:
        from ._newmark_ext import newmark_modal  # noqa: F811
    except ImportError:
        pass
    else:
        BACKEND = "cython"
