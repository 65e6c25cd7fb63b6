"""Backend selection for the hot statevector loops.

The compiled module is used when it imports; ``QFUBQC_PURE=1`` forces the
numpy fallback (handy for debugging and for the benchmark).
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("QFUBQC_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build
        _impl = _pykernels

apply_1q = _impl.apply_1q
apply_cz = _impl.apply_cz
apply_cnot = _impl.apply_cnot
apply_phase = _impl.apply_phase
contract = _impl.contract
parity_table = _impl.parity_table

__all__ = [
    "BACKEND", "apply_1q", "apply_cz", "apply_cnot", "apply_phase",
    "contract", "parity_table",
]
