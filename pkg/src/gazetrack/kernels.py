"""Kernel backend selection.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
numpy implementations in ``_pykernels`` take over. Setting the environment
variable ``GAZETRACK_PURE_PYTHON=1`` forces the fallback.
"""

import os

from . import _pykernels

if os.environ.get("GAZETRACK_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"

linear_assignment = _impl.linear_assignment
iou_matrix = _impl.iou_matrix
siou_matrix = _impl.siou_matrix
nms_keep = _impl.nms_keep
kf_predict = _impl.kf_predict
kf_update = _impl.kf_update
gating_matrix = _impl.gating_matrix


def available_backends():
    """Map backend name to kernel module for every backend importable here."""
    backends = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        backends["cython"] = _ckernels
    return backends
