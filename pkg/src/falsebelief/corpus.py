"""Synthetic corpora and their on-disk layout.

A corpus directory holds ``trials.csv`` (columns ``name, grid, assignment``;
assignment is the 1-based player who received LegendB, blank if unknown)
and one grid CSV per trial.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Union

from ._random import derive_seed
from .gibbs import TrainingCorpus, Trial
from .ingest import IngestError, read_grid_csv, write_grid_csv
from .model import Assignment, ModelParams, simulate_trial


def simulate_corpus(params: ModelParams, n_trials: int, horizon: int = 900,
                    placement_rate: float = 0.2, seed: int = 0) -> tuple[TrainingCorpus, list]:
    """``n_trials`` independent synthetic trials; returns ``(corpus, truths)``."""
    trials, truths = [], []
    for k in range(n_trials):
        grid, truth = simulate_trial(params, horizon, placement_rate, seed=derive_seed(seed, k))
        trials.append(Trial(grid, truth.assignment, name=f"sim{k:03d}"))
        truths.append(truth)
    return TrainingCorpus(trials), truths


def save_corpus(corpus: TrainingCorpus, directory: Union[str, Path]) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "trials.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "grid", "assignment"])
        for k, t in enumerate(corpus.trials):
            name = t.name or f"trial{k:03d}"
            write_grid_csv(t.grid, directory / f"{name}.csv")
            w.writerow([name, f"{name}.csv", "" if t.assignment is None else int(t.assignment) + 1])


def load_corpus(directory: Union[str, Path]) -> TrainingCorpus:
    directory = Path(directory)
    index = directory / "trials.csv"
    if not index.exists():
        raise FileNotFoundError(f"{index} not found")
    trials = []
    with open(index, newline="") as fh:
        for lineno, row in enumerate(csv.DictReader(fh), start=2):
            try:
                a = row["assignment"].strip()
                assignment = Assignment(int(a) - 1) if a else None
                grid = read_grid_csv(directory / row["grid"])
            except (KeyError, ValueError) as exc:
                raise IngestError(f"{index.name}: {exc}", lineno) from None
            trials.append(Trial(grid, assignment, name=row["name"]))
    return TrainingCorpus(trials)
