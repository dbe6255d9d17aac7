"""Variational inference with coupled numerical derivatives.

Gradient estimators for the ELBO (score function, Rao-Blackwellized score
function, reparameterization, and coupled finite differences), the couplings
they rely on, conjugate test models, and an Adam-based fitting loop.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BoundaryError,
    CapabilityError,
    ConfigError,
    ContractError,
    DataError,
    DomainError,
    EstimatorError,
    OptimizerError,
    VindError,
)
from .streams import RandomStream, split  # noqa: E402
from .families import FamilySpec, VariationalParams, sample_joint, log_q  # noqa: E402
from .estimators import (  # noqa: E402
    GradientEstimate,
    bbvi_gradient,
    bbvi_rb_gradient,
    estimate_gradient,
    naive_fd_gradient,
    reparam_gradient,
    vind_gradient,
    vind_uncoupled_gradient,
)
from .optimize import FitConfig, adam_step, estimate_elbo, fit, project  # noqa: E402
