"""Filtering in continuous-time Bayesian networks with exact, factored and sparse engines."""
from .bounds import (
    BoundInputs,
    asymptotic_bound,
    epsilon_crude,
    gamma_prime,
    global_gamma,
    k_step_bound,
    mixing_rate,
    propagation_bound,
    single_step_bound,
    theorem4_bound,
    variable_gamma,
)
from .dense import (
    DenseDistribution,
    all_marginals,
    condition_dense,
    dense_from_factored,
    kl_divergence,
    marginalize,
    normalize,
    propagate_dense,
    uniformize_dense,
)
from .errors import (
    CtffError,
    ModelValidationError,
    SparseInconsistencyError,
    StateSpaceTooLarge,
    StiffnessError,
    TruncationError,
    ZeroProbabilityEvidence,
)
from .factored import (
    FactoredDistribution,
    PropagationConfig,
    SubintervalRecord,
    condition_point,
    factored_rkf_propagate,
    factored_unif_propagate,
    factored_unif_step,
    projected_multiply_M,
    projected_rate_apply,
)
from .filtering import (
    EvidenceTimeline,
    FilterResult,
    IntervalEvidence,
    PointEvidence,
    Query,
    filter_run,
    load_timeline,
    timeline_from_dict,
)
from .generators import (
    floored_initial,
    generate,
    make_disconnected,
    make_random_model,
    make_ring_ising,
    make_running_example,
    make_toroid_ising,
)
from .model import (
    CtbnModel,
    UniformizedModel,
    Variable,
    amalgamate,
    load_model,
    restrict_for_interval_evidence,
    save_model,
    tilde_matrix,
    uniformize,
    validate_model,
)
from .poisson import choose_truncation, poisson_tail, poisson_weights
from .sparse import SparseDistribution, condition_sparse, sparse_from_factored, sparse_unif_propagate

__version__ = "0.1.0"
