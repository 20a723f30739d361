"""Semi-supervised estimation with density-ratio weighted maximum likelihood (DRESS)."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ContractViolation,
    DegenerateTest,
    Divergence,
    DressError,
    ExperimentUnstable,
    IngestError,
    NonConvergence,
    RankDeficient,
    SingularSystem,
)
from .model import ScoreModel, score, score_jacobian  # noqa: F401
from .density_ratio import (  # noqa: F401
    KernelRatioFit,
    MomentFunction,
    PolyBasis,
    RatioModel,
    eval_kernel_ratio,
    eval_moment,
    eval_ratio,
    kulsif_fit,
    median_bandwidth,
    poly_basis,
    solve_ratio_moment,
)
from .estimators import FitResult, KernelRatio, LabeledData, ParametricRatio, dress, mle, weighted_mle  # noqa: F401
from .solver import SolverConfig  # noqa: F401
