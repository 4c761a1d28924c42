"""chainlab: desk-scale verification of estimation bounds along
degradation/restoration chains.

Exact finite-alphabet probability, Fisher-information and error-probability
bound audits, restorers and parameter estimators, mixed-domain training
collapse, sparse recovery certificates, and a deterministic experiment
runner.
"""

from .probability import (
    FiniteDistribution,
    ConditionalTable,
    JointDistribution,
    PipelineChain,
    assemble_joint,
    axis_distribution,
    condition,
    entropy,
    kl_divergence,
    marginal,
    mutual_information,
    normalize,
)
from .information import (
    GaussianMeanFamily,
    InfoReport,
    LaplaceRateFamily,
    TableFamily,
    crb_compare,
    dpi_audit,
    efficiency,
    entropy_error_bound_gaussian,
    entropy_error_bound_grid,
    fisher_information,
    rao_blackwellize,
    score,
    sufficiency_check,
)
from .channels import (
    AwgnChannel,
    BlurOperator,
    DeterministicMap,
    blur_matrix,
    compose_blurs,
    gaussian_kernel,
    is_invertible,
    quantize_awgn,
)
from .restorers import (
    ParamEstimator,
    Restorer,
    estimate_parameter,
    estimator_variance_mc,
    map_restorer,
    mmse_restorer,
    perfect_perception_restorer,
    posterior_sampler,
    with_restorer,
)
from .classification import (
    ClassificationReport,
    CostMatrix,
    bayes_classify,
    bayes_risk,
    pr_gap,
    separability,
    theorem_ordering_audit,
)
from .domain_shift import (
    DomainSpec,
    LinearRestorer,
    double_meaning_minimizer,
    mixed_vs_targeted_report,
    resolution_shift_prediction,
    train_mixed_restorer,
)
from .sparse import (
    KernelOperator,
    RecoveryCertificate,
    SpikeSignal,
    build_kernel_operator,
    l1_map_solve,
    lambda_pipeline_experiment,
    recovery_certificate,
)
from .rng import stream_rng

__version__ = "0.1.0"
