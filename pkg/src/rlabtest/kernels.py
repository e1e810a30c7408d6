"""Backend selection for the hot loops.

The compiled extension is used when it was built and importable; set
``RLABTEST_PURE_PYTHON=1`` to force the numpy/Python fallback.
"""

import os

from rlabtest import _fallback

MODEL_MAIN = _fallback.MODEL_MAIN
MODEL_EXAMPLE1 = _fallback.MODEL_EXAMPLE1
MODEL_EXAMPLE2 = _fallback.MODEL_EXAMPLE2
DESIGN_MARKOV = _fallback.DESIGN_MARKOV
DESIGN_ALTERNATING = _fallback.DESIGN_ALTERNATING
DESIGN_GREEDY = _fallback.DESIGN_GREEDY
DESIGN_FIXED = _fallback.DESIGN_FIXED

_impl = _fallback
BACKEND = "python"
if os.environ.get("RLABTEST_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from rlabtest import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        pass

polynomial_features = _impl.polynomial_features
accumulate_stats = _impl.accumulate_stats
score_outer = _impl.score_outer
simulate_segment = _impl.simulate_segment
