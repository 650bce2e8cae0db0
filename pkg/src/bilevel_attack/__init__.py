"""Bilevel optimization of adversarial-perturbation initializations.

The lower level attacks a surrogate classifier with smooth projected
ascent; the upper level scores the unrolled iterates on an ensemble of
stand-in victims and descends on the initialization through an explicit
reverse recursion. A desk-scale harness trains small analytic models,
runs paired baseline/optimized attacks, and reports transfer success
rates with full black-box audit counters.
"""

from .attacks import (
    AttackerSpec,
    ModelAttackObjective,
    PerturbationConstraint,
    attack_step_mifgsm,
    attack_step_pgd,
    attack_step_vmifgsm,
    objective_for_sample,
    project,
    run_attacker,
)
from .bilevel import (
    AttackResult,
    EnsembleTransferObjective,
    Trajectory,
    hypergradient,
    optimize_initialization,
    run_bilevel_attack,
    select_truncation,
    unroll,
)
from .config import AttackConfig, config_fingerprint, load_config, save_config
from .data import Dataset, LabeledSample, generate_dataset, load_dataset, save_dataset
from .errors import (
    ConfigurationError,
    DataError,
    DimensionError,
    EvaluationError,
    NumericalError,
)
from .evaluate import evaluate_atr, evaluate_atr_many, landscape_grid, rademacher_direction
from .experiment import (
    ExperimentResult,
    run_experiment,
    train_roster,
)
from .models import FeedForwardModel, train

__all__ = [
    "AttackConfig",
    "AttackerSpec",
    "AttackResult",
    "ConfigurationError",
    "DataError",
    "Dataset",
    "DimensionError",
    "EnsembleTransferObjective",
    "EvaluationError",
    "ExperimentResult",
    "FeedForwardModel",
    "LabeledSample",
    "ModelAttackObjective",
    "NumericalError",
    "PerturbationConstraint",
    "Trajectory",
    "attack_step_mifgsm",
    "attack_step_pgd",
    "attack_step_vmifgsm",
    "config_fingerprint",
    "evaluate_atr",
    "evaluate_atr_many",
    "generate_dataset",
    "hypergradient",
    "landscape_grid",
    "load_config",
    "load_dataset",
    "objective_for_sample",
    "optimize_initialization",
    "project",
    "rademacher_direction",
    "run_attacker",
    "run_bilevel_attack",
    "run_experiment",
    "save_config",
    "save_dataset",
    "select_truncation",
    "train",
    "train_roster",
    "unroll",
]
