"""Multicalibration: learning, auditing, oracles and reductions on finite populations."""

__version__ = "0.1.0"

from .agnostic_bridge import (ExhaustiveWeakLearner, Hypothesis, WALContract, correlation,
                              learn_via_wal, wal_from_multicalibration)
from .auditor import (AuditReport, check_al_multicalibration, check_calibration, check_multi_ae,
                      check_multicalibration)
from .bestinclass import PredictorFamily, categories_of, postprocess, verify_lemma_best
from .exceptions import (BudgetExhausted, ConfigError, DensityError, EmptyIntersectionError,
                         GuardTripped, MulticalibError, OracleError, PreconditionError,
                         SchemaError, WindowError)
from .learners import LearnTrace, learn_multi_ae, learn_multicalibrated
from .oracles import (EmpiricalGuessCheck, ExactGuessCheck, ExactSQOracle, PrivacyBudget,
                      PrivateGuessCheck, SampleStore)
from .population import (All, Conjunction, Explicit, GroundTruth, Population, Stump,
                         SubsetCollection, generate_synthetic)
from .predictor import DiscretizationGrid, UpdateProgram, discretize, eval_program_all

__all__ = [
    "All", "AuditReport", "BudgetExhausted", "ConfigError", "Conjunction", "DensityError",
    "DiscretizationGrid", "EmpiricalGuessCheck", "EmptyIntersectionError", "ExactGuessCheck",
    "ExactSQOracle", "ExhaustiveWeakLearner", "Explicit", "GroundTruth", "GuardTripped",
    "Hypothesis", "LearnTrace", "MulticalibError", "OracleError", "Population",
    "PreconditionError", "PredictorFamily", "PrivacyBudget", "PrivateGuessCheck", "SampleStore",
    "SchemaError", "Stump", "SubsetCollection", "UpdateProgram", "WALContract", "WindowError",
    "categories_of", "check_al_multicalibration", "check_calibration", "check_multi_ae",
    "check_multicalibration", "correlation", "discretize", "eval_program_all",
    "generate_synthetic", "learn_multi_ae", "learn_multicalibrated", "learn_via_wal",
    "postprocess", "verify_lemma_best", "wal_from_multicalibration",
]
