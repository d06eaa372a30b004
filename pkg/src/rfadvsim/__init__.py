"""Multi-antenna adversarial-perturbation simulator for a CNN modulation classifier."""

import os as _os

# Pin BLAS to one thread before numpy loads anywhere in this process.
# Reductions then split the same way in every worker, which is what makes
# serial and parallel experiment runs byte-identical.
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS",
             "NUMEXPR_NUM_THREADS"):
    _os.environ.setdefault(_var, "1")

__version__ = "0.1.0"

from . import attack, chan, net, plot, sig  # noqa: E402
from . import eval  # noqa: E402,A004  (experiment harness module)
from . import cli  # noqa: E402
