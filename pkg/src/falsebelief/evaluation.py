"""Scoring, coverage curves, cross-validation and human-observer baselines."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import rbpf
from ._random import derive_seed, stream
from .gibbs import GibbsConfig, TrainingCorpus, Trial, gibbs_train
from .model import Assignment, ModelParams, ObservationGrid
from .oracle import BeliefTrajectory, argmax_assignment, exact_posterior

CHECKPOINTS = (180, 480, 780)
DEFAULT_THRESHOLDS = (0.0, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
BACKENDS = ("exact", "rbpf")


def human_agent_distribution(votes: Sequence[Assignment]) -> np.ndarray:
    """Vote frequencies of three observers as a distribution over assignments."""
    if len(votes) != 3:
        raise ValueError(f"expected exactly three votes, got {len(votes)}")
    p = np.zeros(3)
    for v in votes:
        p[int(Assignment(v))] += 1.0
    return p / 3.0


def score(prediction: Sequence[float], truth: Assignment) -> bool:
    """Correct iff the unique argmax equals ``truth``; ties count as wrong."""
    return argmax_assignment(prediction) == Assignment(truth)


@dataclass(frozen=True)
class CurvePoint:
    threshold: float
    covered: int
    accuracy: Optional[float]  # None when nothing is covered


def threshold_curve(predictions: np.ndarray, truths: Sequence[Assignment],
                    thresholds: Sequence[float] = DEFAULT_THRESHOLDS) -> list[CurvePoint]:
    """Accuracy over the trials whose top probability reaches each threshold."""
    predictions = np.asarray(predictions, dtype=float).reshape(-1, 3)
    if len(predictions) != len(truths):
        raise ValueError("one truth per prediction required")
    correct = np.array([score(p, t) for p, t in zip(predictions, truths)], dtype=bool)
    top = predictions.max(axis=1) if len(predictions) else np.zeros(0)
    out = []
    for th in thresholds:
        if not 0.0 <= th <= 1.0:
            raise ValueError(f"threshold {th} outside [0, 1]")
        covered = top >= th
        n = int(covered.sum())
        out.append(CurvePoint(float(th), n, float(correct[covered].mean()) if n else None))
    return out


def checkpoint_predict(traj: BeliefTrajectory, checkpoints: Sequence[float] = CHECKPOINTS,
                       tick_seconds: float = 1.0) -> dict:
    """``p_assignment`` at tick ``floor(c / tick_seconds)`` for each checkpoint ``c``."""
    out = {}
    for c in checkpoints:
        t = int(np.floor(c / tick_seconds))
        if not 0 <= t < len(traj):
            raise IndexError(f"checkpoint {c} s is outside a trajectory of {len(traj)} ticks")
        out[c] = traj[t].p_assignment.copy()
    return out


def infer(grid: ObservationGrid, params: ModelParams, backend: str = "rbpf",
          filter_config: rbpf.FilterConfig = rbpf.FilterConfig(), seed: int = 0) -> BeliefTrajectory:
    if backend == "exact":
        return exact_posterior(grid, params)
    if backend == "rbpf":
        return rbpf.run_trial(grid, filter_config, params, seed)
    raise ValueError(f"unknown backend {backend!r}; choose from {BACKENDS}")


def make_folds(n: int, k: int, seed: int) -> list[np.ndarray]:
    """Seeded random partition of ``range(n)`` into ``k`` near-equal folds."""
    if k < 2:
        raise ValueError("need at least two folds")
    if n < k:
        raise ValueError(f"corpus of {n} trials is smaller than {k} folds")
    order = stream(seed, 0xF01D).permutation(n)
    return [np.sort(f) for f in np.array_split(order, k)]


@dataclass
class EvalReport:
    names: list[str]
    truths: list[Assignment]
    predictions: np.ndarray               # (n_trials, 3)
    fold_of: Optional[np.ndarray] = None  # fold index per trial
    thresholds: tuple = DEFAULT_THRESHOLDS

    @property
    def predicted(self) -> list[Optional[Assignment]]:
        return [argmax_assignment(p) for p in self.predictions]

    @property
    def correct(self) -> np.ndarray:
        return np.array([score(p, t) for p, t in zip(self.predictions, self.truths)], dtype=bool)

    @property
    def accuracy(self) -> float:
        return float(self.correct.mean())

    @property
    def fold_accuracies(self) -> np.ndarray:
        if self.fold_of is None:
            return np.array([self.accuracy])
        c = self.correct
        return np.array([c[self.fold_of == f].mean() for f in range(self.fold_of.max() + 1)])

    @property
    def mean_accuracy(self) -> float:
        return float(self.fold_accuracies.mean())

    @property
    def std_accuracy(self) -> float:
        """Sample standard deviation across folds (0 for a single fold)."""
        acc = self.fold_accuracies
        return float(acc.std(ddof=1)) if len(acc) > 1 else 0.0

    @property
    def curve(self) -> list[CurvePoint]:
        return threshold_curve(self.predictions, self.truths, self.thresholds)

    def to_table(self) -> str:
        buf = io.StringIO()
        buf.write(f"{'trial':<16}{'fold':>5}  {'pA_1':>6}{'pA_2':>7}{'pA_3':>7}"
                  f"  {'predicted':<11}{'truth':<11}ok\n")
        for k, (name, truth, p) in enumerate(zip(self.names, self.truths, self.predictions)):
            pred = argmax_assignment(p)
            fold = "-" if self.fold_of is None else str(self.fold_of[k])
            buf.write(f"{name:<16}{fold:>5}  {p[0]:6.3f} {p[1]:6.3f} {p[2]:6.3f}  "
                      f"{pred.name if pred is not None else 'NoWinner':<11}"
                      f"{Assignment(truth).name:<11}{'yes' if score(p, truth) else 'no'}\n")
        if self.fold_of is not None:
            accs = " ".join(f"{a:.3f}" for a in self.fold_accuracies)
            buf.write(f"fold accuracies: {accs}\n")
            buf.write(f"accuracy: {self.mean_accuracy:.3f} +/- {self.std_accuracy:.3f} "
                      f"(mean +/- sample std over {len(self.fold_accuracies)} folds)\n")
        else:
            buf.write(f"accuracy: {self.accuracy:.3f} over {len(self.names)} trials\n")
        buf.write("threshold  covered  accuracy\n")
        for pt in self.curve:
            acc = "-" if pt.accuracy is None else f"{pt.accuracy:.3f}"
            buf.write(f"{pt.threshold:9.2f}  {pt.covered:7d}  {acc:>8}\n")
        return buf.getvalue()

    def write_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["trial", "fold", "pA_1", "pA_2", "pA_3", "predicted", "truth", "correct"])
            for k, (name, truth, p) in enumerate(zip(self.names, self.truths, self.predictions)):
                pred = argmax_assignment(p)
                w.writerow([name, "" if self.fold_of is None else int(self.fold_of[k]),
                            *(repr(float(x)) for x in p),
                            "" if pred is None else int(pred) + 1, int(truth) + 1,
                            int(score(p, truth))])

    def write_curve_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["threshold", "covered", "accuracy"])
            for pt in self.curve:
                w.writerow([pt.threshold, pt.covered, "" if pt.accuracy is None else pt.accuracy])


def _run_fold(corpus: TrainingCorpus, folds: list, f: int, seed: int, gibbs_config: GibbsConfig,
              filter_config: rbpf.FilterConfig, params_init: ModelParams,
              backend: str) -> np.ndarray:
    held = set(int(i) for i in folds[f])
    train = corpus.subset([i for i in range(len(corpus)) if i not in held])
    cfg = replace(gibbs_config, seed=derive_seed(seed, f, 0), supervised=True)
    params, _ = gibbs_train(train, cfg, params_init)
    out = np.empty((len(folds[f]), 3))
    for k, i in enumerate(folds[f]):
        traj = infer(corpus.trials[i].grid, params, backend, filter_config,
                     derive_seed(seed, f, 1, int(i)))
        out[k] = traj.final.p_assignment
    return out


def kfold_cv(corpus: TrainingCorpus, k: int = 5, seed: int = 0,
             gibbs_config: GibbsConfig = GibbsConfig(),
             filter_config: rbpf.FilterConfig = rbpf.FilterConfig(),
             params_init: ModelParams = ModelParams(), backend: str = "rbpf",
             workers: int = 1, thresholds: Sequence[float] = DEFAULT_THRESHOLDS) -> EvalReport:
    """Train on ``k - 1`` folds, predict the held-out fold at its final tick.

    Every fold's training and inference seeds derive from ``seed`` and the
    fold/trial indices (``gibbs_config.seed`` is not used), so the report is
    identical for any ``workers``.
    """
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; choose from {BACKENDS}")
    if any(t.assignment is None for t in corpus.trials):
        raise ValueError("cross-validation needs a ground-truth assignment for every trial")
    folds = make_folds(len(corpus), k, seed)
    args = (seed, gibbs_config, filter_config, params_init, backend)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_fold, corpus, folds, f, *args) for f in range(k)]
            results = [fu.result() for fu in futures]
    else:
        results = [_run_fold(corpus, folds, f, *args) for f in range(k)]
    n = len(corpus)
    predictions = np.empty((n, 3))
    fold_of = np.empty(n, dtype=np.int64)
    for f, (idx, res) in enumerate(zip(folds, results)):
        predictions[idx] = res
        fold_of[idx] = f
    return EvalReport(
        names=[t.name or f"trial{i}" for i, t in enumerate(corpus.trials)],
        truths=[t.assignment for t in corpus.trials],
        predictions=predictions, fold_of=fold_of, thresholds=tuple(thresholds))


@dataclass(frozen=True)
class HumanVotes:
    """Three observer choices per checkpoint (seconds) for one trial."""
    votes: dict

    def __post_init__(self):
        for c, v in self.votes.items():
            if len(v) != 3:
                raise ValueError(f"checkpoint {c}: expected three votes, got {len(v)}")


def annotated_eval(trials: Sequence[Trial], votes: Sequence[HumanVotes], params: ModelParams,
                   backend: str = "rbpf", filter_config: rbpf.FilterConfig = rbpf.FilterConfig(),
                   seed: int = 0, checkpoints: Sequence[float] = CHECKPOINTS,
                   thresholds: Sequence[float] = DEFAULT_THRESHOLDS) -> dict:
    """Agent vs human-observer reports per checkpoint on annotated trials.

    Returns ``{checkpoint: (agent_report, human_report)}``.
    """
    if len(trials) != len(votes):
        raise ValueError("one HumanVotes per trial required")
    names = [t.name or f"trial{i}" for i, t in enumerate(trials)]
    truths = [t.assignment for t in trials]
    agent = {c: [] for c in checkpoints}
    for i, t in enumerate(trials):
        traj = infer(t.grid, params, backend, filter_config, derive_seed(seed, i))
        for c, p in checkpoint_predict(traj, checkpoints, t.grid.tick_seconds).items():
            agent[c].append(p)
    out = {}
    for c in checkpoints:
        human = np.array([human_agent_distribution(v.votes[c]) for v in votes])
        out[c] = (EvalReport(names, truths, np.array(agent[c]), thresholds=tuple(thresholds)),
                  EvalReport(names, truths, human, thresholds=tuple(thresholds)))
    return out
