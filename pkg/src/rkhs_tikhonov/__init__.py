"""Tikhonov regularization for non-linear statistical inverse learning in RKHS."""

from .kernels import *  # noqa: F401,F403
from .hilbert import *  # noqa: F401,F403
from .operators import *  # noqa: F401,F403
from .tikhonov import *  # noqa: F401,F403
from .experiments import *  # noqa: F401,F403
from .lowerbound import *  # noqa: F401,F403

__version__ = "0.1.0"
