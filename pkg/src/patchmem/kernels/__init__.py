"""Hot-kernel dispatch: compiled extension when available, NumPy otherwise.

Set ``PATCHMEM_PURE=1`` to force the NumPy fallback (used by the parity
tests and the kernel benchmark). Both backends produce bitwise-identical
results; the compiled path avoids large temporaries and fuses reductions.
"""

import os

from . import pure

_FORCE_PURE = os.environ.get("PATCHMEM_PURE", "").lower() in {"1", "true", "yes"}

if _FORCE_PURE:
    _native = None
else:
    try:
        from . import _native
    except ImportError:
        _native = None

DEFAULT_BLOCK_ROWS = pure.DEFAULT_BLOCK_ROWS

if _native is not None:
    BACKEND = "native"

    def bank_search(queries, bank, block_rows=DEFAULT_BLOCK_ROWS):
        queries, bank = pure.check_search_args(queries, bank, block_rows)
        return _native.bank_search(queries, bank, block_rows)

    def paint_harmonic(boxes, scores, rows, cols, eps):
        boxes, scores = pure.check_paint_args(boxes, scores, rows, cols)
        return _native.paint_harmonic(boxes, scores, rows, cols, eps)

    bank_search.__doc__ = pure.bank_search.__doc__
    paint_harmonic.__doc__ = pure.paint_harmonic.__doc__
else:
    BACKEND = "pure"
    bank_search = pure.bank_search
    paint_harmonic = pure.paint_harmonic

__all__ = ["BACKEND", "DEFAULT_BLOCK_ROWS", "bank_search", "paint_harmonic", "pure"]
