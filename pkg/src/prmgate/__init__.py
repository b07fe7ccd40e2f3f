"""Uncertainty-gated active learning for step-level process reward models.

An ensemble scorer assigns per-step correctness probabilities to reasoning
trajectories; dual aleatoric/epistemic gates decide which trajectories are
worth sending to an annotator; a budget-accounted loop interleaves selection,
annotation, and SGD. Includes a synthetic data generator with planted ground
truth, an LLM-judge prompt/parse protocol, an annotation-cost calculator,
and a first-error F1 evaluation harness.
"""

from .active import (
    BudgetLedger,
    GridRow,
    LedgerRow,
    SelectionResult,
    grid_search,
    run_full,
    run_one_shot_filter,
    run_pool_based,
    run_random_baseline,
    select_batch,
)
from .annotate import (
    Annotation,
    AnnotationError,
    AnnotationSource,
    AnnotatorUnavailable,
    JudgeParseError,
    JudgeVerdict,
    RemoteJudgeClient,
    build_judge_prompt,
    judge_annotate,
    oracle_annotate,
    parse_judge_response,
)
from .core import (
    Config,
    ConfigError,
    DatasetError,
    GoldLabel,
    StepRecord,
    Trajectory,
    load_config,
    load_dataset,
    make_trajectory,
    save_dataset,
)
from .costs import CostConstants, CostQuery, Strategy, budget_ratio, estimate_cost
from .datagen import GenSpec, generate, split
from .ensemble import (
    CheckpointError,
    DivergenceError,
    EnsembleModel,
    ForwardOutput,
    Gradients,
    forward,
    grad,
    init_model,
    load_checkpoint,
    loss,
    save_checkpoint,
    sgd_step,
)
from .evaluation import EvalOutcome, EvalRow, evaluate, predict_first_error
from .uncertainty import (
    UncertaintyReport,
    ensemble_stats,
    first_error_index,
    gates,
    is_uncertain,
)

__version__ = "0.1.0"
