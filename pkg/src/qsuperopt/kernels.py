"""Kernel selection: the compiled extension when importable, else numpy.

Set ``QSUPEROPT_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py as python_impl

compiled_impl = None
if os.environ.get("QSUPEROPT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as compiled_impl
    except ImportError:  # extension not built
        compiled_impl = None

impl = compiled_impl or python_impl
BACKEND = "compiled" if compiled_impl is not None else "python"

array_and_count = impl.array_and_count
array_and = impl.array_and
bitset_and_count = impl.bitset_and_count
bitset_and3_count = impl.bitset_and3_count
array_bitset_count = impl.array_bitset_count
array_bitset_and = impl.array_bitset_and
nested_loop_pairs = impl.nested_loop_pairs
