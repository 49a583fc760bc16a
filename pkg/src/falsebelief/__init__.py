"""Bayesian inference of marker-legend false beliefs in three-player search missions."""

from .corpus import load_corpus, save_corpus, simulate_corpus
from .evaluation import (
    EvalReport,
    HumanVotes,
    annotated_eval,
    checkpoint_predict,
    human_agent_distribution,
    infer,
    kfold_cv,
    make_folds,
    score,
    threshold_curve,
)
from .gibbs import GibbsConfig, PosteriorSamples, TrainingCorpus, Trial, conditional_theta, gibbs_train
from .ingest import FovGeometry, TrialEvent, TrialEventLog, discretize, in_fov, validate
from .model import (
    Assignment,
    GroundTruth,
    Latents,
    Legend,
    MarkerKind,
    ModelParams,
    ObservationGrid,
    Perception,
    TickObservation,
    assignment_cpd,
    follow_legend_theta,
    log_joint,
    simulate_trial,
)
from .oracle import BeliefTrajectory, PosteriorSnapshot, exact_posterior, predict_assignment
from .rbpf import FilterConfig, FilterState

__all__ = [
    "Assignment",
    "BeliefTrajectory",
    "EvalReport",
    "FilterConfig",
    "FilterState",
    "FovGeometry",
    "GibbsConfig",
    "GroundTruth",
    "HumanVotes",
    "Latents",
    "Legend",
    "MarkerKind",
    "ModelParams",
    "ObservationGrid",
    "Perception",
    "PosteriorSamples",
    "PosteriorSnapshot",
    "TickObservation",
    "TrainingCorpus",
    "Trial",
    "TrialEvent",
    "TrialEventLog",
    "annotated_eval",
    "assignment_cpd",
    "checkpoint_predict",
    "conditional_theta",
    "discretize",
    "exact_posterior",
    "follow_legend_theta",
    "gibbs_train",
    "human_agent_distribution",
    "in_fov",
    "infer",
    "kfold_cv",
    "load_corpus",
    "log_joint",
    "make_folds",
    "predict_assignment",
    "save_corpus",
    "score",
    "simulate_corpus",
    "simulate_trial",
    "threshold_curve",
    "validate",
]
