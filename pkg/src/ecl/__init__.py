"""Elliptic collocation learning.

A small tanh MLP trained on Poisson benchmark problems under three objective
formulations (supervised regression, soft-penalty physics residuals, and an
augmented-Lagrangian constrained formulation), with diagnostics for comparing
how each formulation shapes accuracy, loss landscapes, and learned weights.
"""

from .network import (
    BatchObjective,
    DivergenceError,
    FieldBatch,
    FieldEvaluation,
    FieldNetwork,
    LossGradient,
    MLPConfig,
    ObjectiveTerm,
    load_params,
    load_params_csv,
    save_params,
    save_params_csv,
)
from .problems import (
    Problem,
    SampleBatch,
    batch_from_rng,
    evaluation_grid,
    export_exact_grid,
    make_problem,
    poisson1d,
    poisson2d,
    residual,
    sample_batch,
    sample_boundary,
    sample_domain,
)
from .training import (
    AdamState,
    AlmState,
    ObjectiveKind,
    PlateauScheduler,
    TrainConfig,
    TrainRecord,
    TrainResult,
    adam_step,
    alm_update,
    build_objective,
    loss_value,
    pecann_loss,
    pinn_loss,
    scheduler_step,
    supervised_loss,
    train,
)
from .analysis import (
    EvaluationResult,
    LandscapeGrid,
    LayerHistogram,
    evaluate_model,
    export_histograms,
    export_landscape,
    export_prediction,
    filter_normalize,
    relative_l2,
    scan_landscape,
    weight_histograms,
)
from .estimator import EllipticNetRegressor
from .experiment import ExperimentConfig, RunOutcome, default_matrix, run, run_matrix

__version__ = "0.1.0"
