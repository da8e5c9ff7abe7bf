"""Desk-scale comparison of finite statistical experiments.

Exact deficiency values between finite experiments via linear programming,
explicit randomization kernels built from partitions of likelihood space
with certified error bounds, convergence certification for experiment
sequences, and minimax risk games with least-favorable priors, plus
scenario generators and a CLI tying the pipeline together.
"""

from .core import (
    BOUND_SLACK,
    DERIVED_ATOL,
    LP_TOL,
    PROB_ATOL,
    READER_ATOL,
    FiniteExperiment,
    Kernel,
    LikelihoodVectors,
    PointDistribution,
    compose_kernels,
    dominating_mixture,
    experiment_from_dict,
    experiment_to_dict,
    likelihood_vectors,
    load_experiment,
    push_forward,
    save_experiment,
    total_variation,
)
from .coupling import (
    REMAINDER_KEY,
    ConditionReport,
    CouplingCertificate,
    CouplingMeasure,
    LabeledSpace,
    Partition,
    build_coupling_measure,
    build_partition,
    canonical_space,
    canonicalize,
    certify_bound,
    check_mass_condition,
    construct_kernel,
)
from .convergence import (
    DEFAULT_PROBE,
    DEFAULT_SCHEDULE,
    ConvergenceReport,
    ExperimentSequence,
    TransportResult,
    certify_convergence,
    transport_distance,
    transport_plan,
)
from .deficiency import (
    DeficiencyResult,
    DualCertificate,
    deficiency,
    lecam_distance,
)
from .errors import (
    CertificationError,
    ConditionError,
    DimensionError,
    DominationError,
    LeCamError,
    ScenarioError,
    SolverError,
    ValidationError,
)
from .minimax import (
    BayesResult,
    GameResult,
    LossSpec,
    TransferReport,
    bayes_risk,
    lam_transfer_check,
    load_loss,
    loss_from_dict,
    loss_to_dict,
    minimax_value,
    risk,
)
from .scenarios import (
    GaussianShiftLimit,
    ScenarioConfig,
    ScenarioReport,
    binomial_lan_sequence,
    constant_sequence,
    gen_binomial_lan,
    gen_gaussian_shift,
    lan_epsilon,
    load_config,
    run_scenario,
    write_csv_tables,
)

__version__ = "0.1.0"
