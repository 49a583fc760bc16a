"""Gibbs sampler for the shared marker-emission parameters.

One sweep visits three blocks:

1. every (trial, player) perception path, by forward-filter backward-sample;
2. every trial's legends and team legend given its paths;
3. each ``theta_j`` from its conjugate Beta posterior, with placement counts
   pooled across all trials and players.

Legends are drawn from their 16-point conditional over (legend triple, team
legend). In supervised mode a trial with a known assignment has its legend
triple clamped and only the team legend is sampled.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import _hmm
from ._random import stream
from .model import (
    ASSIGNMENT_TABLE,
    Assignment,
    Legend,
    ModelParams,
    N_PLAYERS,
    ObservationGrid,
    Perception,
    TickObservation,
    legends_for,
    placement_loglik,
)

_PATHS, _LATENTS, _THETA, _INIT = 0, 1, 2, 3

# legend bits of triple code k (player 1 most significant), and the code of
# each valid assignment
_O = np.array([[(k >> (2 - i)) & 1 for i in range(N_PLAYERS)] for k in range(8)])
_VALID_K = np.array([sum(int(o) << (2 - i) for i, o in enumerate(legends_for(a)))
                     for a in Assignment])


@dataclass
class Trial:
    grid: ObservationGrid
    assignment: Optional[Assignment] = None
    name: str = ""


@dataclass
class TrainingCorpus:
    trials: list[Trial]

    def __post_init__(self):
        if not self.trials:
            raise ValueError("training corpus is empty")
        for t in self.trials:
            if t.grid.n_players != N_PLAYERS:
                raise ValueError(f"trial {t.name!r} does not have {N_PLAYERS} players")

    def __len__(self):
        return len(self.trials)

    def subset(self, indices: Sequence[int]) -> "TrainingCorpus":
        return TrainingCorpus([self.trials[i] for i in indices])


@dataclass(frozen=True)
class GibbsConfig:
    iterations: int = 600
    burn_in: int = 100
    seed: int = 0
    supervised: bool = True

    def __post_init__(self):
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("need 0 <= burn_in < iterations")


@dataclass
class PosteriorSamples:
    theta_samples: np.ndarray            # (iterations - burn_in, 8)
    update_counts: dict = field(default_factory=dict)
    # (n_trials, 3): p(A | sampled legends) averaged over kept sweeps
    assignment_probs: Optional[np.ndarray] = None

    @property
    def theta_mean(self) -> np.ndarray:
        return self.theta_samples.mean(axis=0)

    def write_chain(self, path: Union[str, Path], first_iteration: int = 0) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration"] + [f"theta{j}" for j in range(1, 9)])
            for k, row in enumerate(self.theta_samples):
                w.writerow([first_iteration + k] + [repr(float(x)) for x in row])


def conditional_theta(counts: np.ndarray) -> list[tuple[float, float]]:
    """Beta posterior parameters per slot from an ``(8, 2)`` count matrix.

    Column 0 counts Marker1, column 1 Marker2; the prior is Beta(1, 1).
    """
    counts = np.asarray(counts)
    if counts.shape != (8, 2) or np.any(counts < 0):
        raise ValueError("counts must be a non-negative (8, 2) matrix")
    return [(1.0 + float(a), 1.0 + float(b)) for a, b in counts]


def ffbs_perception(player_obs: Sequence[TickObservation], o: Legend, t_legend: Legend,
                    params: ModelParams, seed: int) -> list[Perception]:
    """Exact joint draw of one player's perception path given ``(O, T)``."""
    if len(player_obs) == 0:
        raise ValueError("observation sequence must be non-empty")
    n = len(player_obs)
    fov = np.array([[obs.fov_victim for obs in player_obs]])
    counts = np.zeros((1, n, 2), dtype=np.int64)
    for t, obs in enumerate(player_obs):
        for m in obs.placements:
            counts[0, t, int(m) - 1] += 1
    theta = params.theta_table[:, int(o), int(t_legend)][None]
    path = _hmm.sample_paths(counts, theta, fov, np.array([n]), params.transition_matrix,
                             params.perception_prior, stream(seed, _PATHS))
    return [Perception(int(x)) for x in path[0]]


class GibbsSampler:
    """Sampler state over a corpus; :meth:`sweep` performs one full iteration."""

    def __init__(self, corpus: TrainingCorpus, config: GibbsConfig, params: ModelParams):
        self.config = config
        self.params = params
        self.n_trials = len(corpus)
        self.known = np.array([
            -1 if (t.assignment is None or not config.supervised) else int(t.assignment)
            for t in corpus.trials
        ])
        self.set_grids([t.grid for t in corpus.trials])

        rng = stream(config.seed, 0, _INIT)
        self.theta = params.theta_array.copy()
        bits = (rng.random((self.n_trials, N_PLAYERS)) < params.mu_O).astype(np.int64)
        codes = bits @ np.array([4, 2, 1])
        clamped = self.known >= 0
        codes[clamped] = _VALID_K[self.known[clamped]]
        self.legend_code = codes
        self.team = (rng.random(self.n_trials) < params.mu_T).astype(np.int64)
        self.paths = np.zeros(self.fov.shape, dtype=np.int8)
        self.chain_counts = np.zeros((self.n_trials * N_PLAYERS, 2, 2), dtype=np.int64)
        self.updates = {"paths": 0, "legends": 0, "theta": 0}

    def set_grids(self, grids: Sequence[ObservationGrid]) -> None:
        """Load evidence; chain ``c = trial * 3 + player``."""
        if len(grids) != self.n_trials:
            raise ValueError("one grid per trial required")
        longest = max(g.n_ticks for g in grids)
        n_chains = self.n_trials * N_PLAYERS
        self.fov = np.zeros((n_chains, longest), dtype=bool)
        self.n_markers = np.zeros((n_chains, longest, 2), dtype=np.int64)
        self.lengths = np.zeros(n_chains, dtype=np.int64)
        for k, g in enumerate(grids):
            for i in range(N_PLAYERS):
                c = k * N_PLAYERS + i
                self.fov[c, : g.n_ticks] = g.fov[:, i]
                self.n_markers[c, : g.n_ticks] = g.marker_counts[:, i]
                self.lengths[c] = g.n_ticks
        # sparse view of ticks carrying placements
        self._pc, self._pt = np.nonzero(self.n_markers.sum(axis=2))
        self._pn = self.n_markers[self._pc, self._pt]

    def _sample_paths(self, rng: np.random.Generator) -> None:
        o = self.legends.ravel()
        t = np.repeat(self.team, N_PLAYERS)
        theta = self.theta.reshape(2, 2, 2)[:, o, t].T  # (chains, p)
        self.paths = _hmm.sample_paths(self.n_markers, theta, self.fov, self.lengths,
                                       self.params.transition_matrix,
                                       self.params.perception_prior, rng)
        # counts[c, p, m] of marker m placed while the previous state was p
        prev = self.paths[self._pc, self._pt - 1].astype(np.int64)
        counts = np.zeros((self.fov.shape[0], 2, 2), dtype=np.int64)
        np.add.at(counts, (self._pc, prev), self._pn)
        self.chain_counts = counts
        self.updates["paths"] += self.fov.shape[0]

    def _sample_legends(self, rng: np.random.Generator) -> None:
        params = self.params.with_theta(self.theta)
        ll = placement_loglik(self.chain_counts, params)  # (chains, o, T)
        ll = ll.reshape(self.n_trials, N_PLAYERS, 2, 2)
        with np.errstate(divide="ignore"):
            log_o = np.log([1.0 - params.mu_O, params.mu_O])
            log_t = np.log([1.0 - params.mu_T, params.mu_T])
        # lw[trial, k, T] over the eight legend triples
        lw = np.broadcast_to(log_t, (self.n_trials, 8, 2)).copy()
        for i in range(N_PLAYERS):
            lw += log_o[_O[:, i]][None, :, None] + ll[:, i, _O[:, i], :]
        clamped = self.known >= 0
        if clamped.any():
            keep = np.zeros((self.n_trials, 8), dtype=bool)
            keep[~clamped] = True
            keep[clamped, _VALID_K[self.known[clamped]]] = True
            lw = np.where(keep[:, :, None], lw, -np.inf)
        lw = lw.reshape(self.n_trials, 16)
        prob = np.exp(lw - lw.max(axis=1, keepdims=True))
        cdf = np.cumsum(prob, axis=1)
        u = rng.random(self.n_trials) * cdf[:, -1]
        pick = np.minimum((cdf <= u[:, None]).sum(axis=1), 15)
        self.legend_code = pick // 2
        self.team = pick % 2
        self.updates["legends"] += self.n_trials

    @property
    def legends(self) -> np.ndarray:
        return _O[self.legend_code]

    def canonical(self) -> tuple[np.ndarray, np.ndarray]:
        """Current ``theta`` and legend codes under the labelling convention.

        Flipping every legend within one team-legend group, together with
        the matching theta slots, leaves the posterior unchanged. Without
        clamped trials to pin the labels, each group is relabelled so that
        LegendA is the majority legend among its players.
        """
        theta = self.theta.reshape(2, 2, 2).copy()
        codes = self.legend_code.copy()
        if (self.known >= 0).any():
            return theta.ravel(), codes
        for g in (0, 1):
            members = self.team == g
            n_b = _O[codes[members]].sum()
            if 2 * n_b > N_PLAYERS * members.sum():
                codes[members] = 7 - codes[members]
                theta[:, :, g] = theta[:, ::-1, g]
        return theta.ravel(), codes

    def slot_counts(self) -> np.ndarray:
        """Pooled ``(8, 2)`` Marker1/Marker2 counts per emission slot."""
        o = self.legends.ravel()
        t = np.repeat(self.team, N_PLAYERS)
        out = np.zeros((8, 2), dtype=np.int64)
        for p in (0, 1):
            np.add.at(out, 4 * p + 2 * o + t, self.chain_counts[:, p, :])
        return out

    def _sample_theta(self, rng: np.random.Generator) -> None:
        ab = np.array(conditional_theta(self.slot_counts()))
        self.theta = rng.beta(ab[:, 0], ab[:, 1])
        self.updates["theta"] += 8

    def sweep(self, iteration: int) -> None:
        seed = self.config.seed
        self._sample_paths(stream(seed, iteration, _PATHS))
        self._sample_legends(stream(seed, iteration, _LATENTS))
        self._sample_theta(stream(seed, iteration, _THETA))

    def run(self) -> tuple[ModelParams, PosteriorSamples]:
        cfg = self.config
        kept = np.empty((cfg.iterations - cfg.burn_in, 8))
        assignment_probs = np.zeros((self.n_trials, 3))
        for it in range(cfg.iterations):
            self.sweep(it)
            if it >= cfg.burn_in:
                theta, codes = self.canonical()
                kept[it - cfg.burn_in] = theta
                assignment_probs += ASSIGNMENT_TABLE[codes]
        assignment_probs /= len(kept)
        samples = PosteriorSamples(kept, dict(self.updates), assignment_probs)
        return self.params.with_theta(samples.theta_mean), samples


def gibbs_train(corpus: TrainingCorpus, config: GibbsConfig = GibbsConfig(),
                params_init: ModelParams = ModelParams()):
    """Learn ``theta``; returns ``(ModelParams, PosteriorSamples)``.

    The returned parameters carry the post-burn-in posterior mean of
    ``theta`` and the fixed priors/transition of ``params_init``.
    """
    if not isinstance(corpus, TrainingCorpus):
        corpus = TrainingCorpus(list(corpus))
    return GibbsSampler(corpus, config, params_init).run()
