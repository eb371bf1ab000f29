"""Slot-assignment backend, compiled when available.

Set ``WFPAD_PURE_PYTHON=1`` to force the pure-Python implementation.
"""
import os

from . import _slots_py

if os.environ.get("WFPAD_PURE_PYTHON"):
    _impl = _slots_py
else:
    try:
        from . import _slots as _impl
    except ImportError:
        _impl = _slots_py

BACKEND = "compiled" if _impl is not _slots_py else "python"
assign_slots = _impl.assign_slots
first_slot = _impl.first_slot
