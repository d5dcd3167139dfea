"""Linear transport of centered Gaussians and the particle maps it induces.

Monge maps and McCann geodesics between covariances, horizontal lifts and
holonomy on the factor bundle ``Phi -> Phi Sigma_ref Phi^T``, a shooting
solver for transport with a prescribed end-to-end particle map, and
mixing-free transport around polygons of covariances.
"""

from .connection import *  # noqa: F401,F403
from .cycles import *  # noqa: F401,F403
from .errors import DomainError, IntegrationBreakdown, NonConvergenceError, OMTError, PreconditionError, UsageError
from .experiments import ExperimentConfig, TrajectoryDump, load_config, run, write_dump
from .gaussian_omt import *  # noqa: F401,F403
from .geodesics import *  # noqa: F401,F403
from .numerics import *  # noqa: F401,F403
from .plotting import UnsupportedDimensionError, render_ellipses

__version__ = "0.1.0"
