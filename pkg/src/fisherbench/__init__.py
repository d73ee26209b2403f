"""Fisher-information lower bounds and simulation harness for distributed estimation
under communication and local differential privacy constraints."""

from .bounds import (
    Bits,
    BoundResult,
    Ldp,
    achievable_rate,
    explicit_local_bound,
    global_lower_bound,
    hhp_optimize,
    kappa,
    local_lower_bound,
    partition_constant,
    van_trees_lq,
)
from .channels import FiniteChannel, k_rr, ldp_epsilon, output_fisher, rappor, verify_contraction
from .models import (
    DiscreteDistribution,
    GaussianDiagCovariance,
    GaussianLocation,
    ProductBernoulli,
    SubModel,
    fisher_information,
    score,
    submodel_construct,
)
from .protocols import (
    make_gaussian_onebit_scheme,
    make_grouping_scheme,
    make_krr_scheme,
    make_rappor_scheme,
    project_simplex,
    run,
    sample_split,
)
from .simulate import ExperimentConfig, monte_carlo_risk

__version__ = "0.1.0"
