"""Stochastic mirror descent laboratory.

Optimizer, machine-precision identity auditor, projection oracles, and the
reproducible experiment CLI.  The hot linear-model loop runs on a compiled
kernel when the extension is built, with a pure-Python twin otherwise.
"""

from ._kernels import HAVE_COMPILED, default_kernel_name
from .auditor import (
    Adversary,
    IdentityReport,
    MinimaxCertificate,
    adversary_ratio,
    consistent_noise,
    construct_adversary,
    minimax_ratio,
    sgd_square_identity,
    step_identity_residual,
    telescoped_identity,
)
from .engine import (
    AdaptiveStep,
    ConstantStep,
    RunTrace,
    SequenceStep,
    StepSizeCertificate,
    adaptive_step_bound,
    certify_step_size,
    default_init,
    dual_consistency_max_dev,
    run,
    smd_step,
)
from .errors import DomainError, NumericsError, PreconditionError, SmdLabError
from .losses import (
    HuberLoss,
    LogCoshLoss,
    Loss,
    QuarticLoss,
    SquareLoss,
    loss_bregman,
    make_loss,
    sample_loss,
    sample_loss_grad,
)
from .models import (
    Dataset,
    LinearModel,
    Model,
    RandomFeatureModel,
    ShallowSmoothModel,
    make_model,
    membership_residual,
    validate_dataset,
)
from .oracles import ProjectionResult, bregman_project, brute_force_project, min_l2_solution
from .potentials import (
    NegativeEntropy,
    Potential,
    QNormComponentwise,
    QNormSquared,
    QuadraticQ,
    SquaredL2,
    make_potential,
)

__version__ = "0.1.0"
