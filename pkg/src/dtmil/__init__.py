"""Domain-transfer multi-instance learning.

Bags of instance vectors are embedded against learned dictionaries (max dot
product per codeword) and classified linearly; a source-domain model is
adapted to a target domain by jointly learning a transfer dictionary and
adaptation weights through alternating dual maximization and per-codeword
gradient descent.
"""

from .core import (
    AdaptedModel,
    Bag,
    Dictionary,
    Hyperparams,
    SourceModel,
    embed_bag,
    hinge_loss,
    predict,
    primal_objective,
    score_source,
    score_target,
)
from .data import (
    SynthConfig,
    generate_synthetic,
    load_adapted_model,
    load_dataset,
    load_model,
    load_source_model,
    save_dataset,
    save_model,
)
from .errors import (
    DatasetFormatError,
    DegenerateInputError,
    InvalidInputError,
    ModelFormatError,
    NumericalInputError,
)
from .evaluate import (
    FoldSplit,
    ProtocolReport,
    accuracy,
    run_protocol,
    split_folds,
    sweep,
)
from .learn import (
    AssignmentTable,
    FitReport,
    assign_max_instances,
    build_assignment_table,
    build_u,
    codeword_gradient,
    codeword_objective,
    fit_dtc,
    init_dictionary,
    recover_w,
    train_source,
    update_codeword,
)
from .qp import DualProblem, DualState, dual_value, kkt_residual, solve_box_qp

__all__ = [
    "AdaptedModel",
    "AssignmentTable",
    "Bag",
    "DatasetFormatError",
    "DegenerateInputError",
    "Dictionary",
    "DualProblem",
    "DualState",
    "FitReport",
    "FoldSplit",
    "Hyperparams",
    "InvalidInputError",
    "ModelFormatError",
    "NumericalInputError",
    "ProtocolReport",
    "SourceModel",
    "SynthConfig",
    "accuracy",
    "assign_max_instances",
    "build_assignment_table",
    "build_u",
    "codeword_gradient",
    "codeword_objective",
    "dual_value",
    "embed_bag",
    "fit_dtc",
    "generate_synthetic",
    "hinge_loss",
    "init_dictionary",
    "kkt_residual",
    "load_adapted_model",
    "load_dataset",
    "load_model",
    "load_source_model",
    "predict",
    "primal_objective",
    "recover_w",
    "run_protocol",
    "save_dataset",
    "save_model",
    "score_source",
    "score_target",
    "solve_box_qp",
    "split_folds",
    "sweep",
    "train_source",
    "update_codeword",
]

__version__ = "0.1.0"
