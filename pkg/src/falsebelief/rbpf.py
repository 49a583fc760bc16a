"""Rao-Blackwellised particle filter.

Particles sample perception states only. The legends ``(O_1, O_2, O_3, T)``
are integrated out per particle: their posterior depends on the sampled
perception history solely through the counts ``n_i[p][m]`` of marker ``m``
placements made while the particle's previous-tick state was ``p``, so the
path itself is never stored.

Randomness is drawn per tick from streams keyed by ``(seed, tick, purpose)``
and particle ``k`` always consumes element ``k``, which keeps results
bit-identical however the arithmetic is split.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from ._random import stream
from .model import (
    ASSIGNMENT_TABLE,
    ModelParams,
    N_PLAYERS,
    ObservationGrid,
    TickObservation,
    log_emission_table,
)
from .oracle import BeliefTrajectory, PosteriorSnapshot

_INIT, _PROPAGATE, _RESAMPLE = 0, 1, 2


@dataclass(frozen=True)
class FilterConfig:
    n_particles: int = 5000
    ess_threshold_fraction: float = 0.5
    resampling: str = "systematic"

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        if not 0.0 < self.ess_threshold_fraction <= 1.0:
            raise ValueError("ess_threshold_fraction must be in (0, 1]")
        if self.resampling != "systematic":
            raise ValueError(f"unsupported resampling scheme {self.resampling!r}")


@dataclass(frozen=True, eq=False)
class FilterState:
    """Particle population after processing ticks ``0..tick``.

    ``tick`` is -1 straight after :func:`init`, before any evidence.
    ``log_weights`` are normalised. ``loglik[k, i, o, T]`` caches the
    log-likelihood of player ``i``'s placements under legend pair ``(o, T)``
    and always equals what ``counts`` imply; ``legend_post`` caches the
    resulting per-particle posterior over (legend triple, team legend).
    """

    perception: np.ndarray   # (N, 3) int8
    counts: np.ndarray       # (N, 3, 2, 2) int64, [k, i, p, m]
    log_weights: np.ndarray  # (N,)
    loglik: np.ndarray       # (N, 3, 2, 2)
    legend_post: np.ndarray  # (N, 8, 2), legend_posterior(loglik)
    tick: int
    rng_seed: int
    config: FilterConfig
    n_resamples: int = 0

    @property
    def n_particles(self) -> int:
        return self.perception.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    @property
    def ess(self) -> float:
        w = self.weights
        return float(1.0 / np.sum(w * w))


_O = np.array([[(k >> (2 - i)) & 1 for i in range(N_PLAYERS)] for k in range(8)])


def legend_posterior(loglik: np.ndarray, params: ModelParams) -> np.ndarray:
    """Normalised posterior over ``[k, T]`` (k = legend triple) per particle.

    ``loglik`` has shape ``(N, 3, 2, 2)``; returns ``(N, 8, 2)``.
    """
    with np.errstate(divide="ignore"):
        log_o = np.log([1.0 - params.mu_O, params.mu_O])
        log_t = np.log([1.0 - params.mu_T, params.mu_T])
    lw = np.broadcast_to(log_t, (loglik.shape[0], 8, 2)).copy()
    for i in range(N_PLAYERS):
        lw += log_o[_O[:, i]][None, :, None] + loglik[:, i, _O[:, i], :]
    lw -= lw.max(axis=(1, 2), keepdims=True)
    post = np.exp(lw)
    post /= post.sum(axis=(1, 2), keepdims=True)
    return post


def init(config: FilterConfig, params: ModelParams, seed: int) -> FilterState:
    n = config.n_particles
    u = stream(seed, _INIT).random((n, N_PLAYERS))
    perception = (u < params.mu_P).astype(np.int8)
    return FilterState(
        perception=perception,
        counts=np.zeros((n, N_PLAYERS, 2, 2), dtype=np.int64),
        log_weights=np.full(n, -np.log(n)),
        loglik=np.zeros((n, N_PLAYERS, 2, 2)),
        legend_post=legend_posterior(np.zeros((1, N_PLAYERS, 2, 2)), params).repeat(n, axis=0),
        tick=-1,
        rng_seed=seed,
        config=config,
    )


def _systematic_indices(weights: np.ndarray, u0: float) -> np.ndarray:
    n = weights.shape[0]
    positions = (u0 + np.arange(n)) / n
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, positions, side="right")


def step(state: FilterState, obs: Sequence[TickObservation], params: ModelParams) -> FilterState:
    """Advance the filter by one tick of evidence."""
    if len(obs) != N_PLAYERS:
        raise ValueError(f"expected observations for {N_PLAYERS} players, got {len(obs)}")
    t = state.tick + 1
    n = state.n_particles
    perception = state.perception.copy()
    counts = state.counts.copy()
    loglik = state.loglik
    post = state.legend_post
    logw = state.log_weights.copy()
    fov = np.array([o.fov_victim for o in obs], dtype=bool)

    if t == 0:
        if any(o.placements for o in obs):
            raise ValueError("tick 0 cannot carry marker placements")
        # Propose P_0 from p(P_0 | F_0): the factor mu_P is common to all particles.
        perception[:, fov] = 1
    else:
        lt = log_emission_table(params)
        theta = params.theta_table
        rows = np.arange(n)
        for i, o in enumerate(obs):
            for m in o.placements:
                mi = int(m) - 1
                prev = perception[:, i]
                # marginal over (O_i, T)
                p_ot = np.stack([post[:, _O[:, i] == 0, :].sum(axis=1),
                                 post[:, _O[:, i] == 1, :].sum(axis=1)], axis=1)
                p1 = theta[prev]  # (N, 2, 2) Marker1 prob under each (o, T)
                like = p_ot * (p1 if mi == 0 else 1.0 - p1)
                with np.errstate(divide="ignore"):
                    logw += np.log(like.sum(axis=(1, 2)))
                counts[rows, i, prev, mi] += 1
                loglik = loglik.copy()
                loglik[:, i] += lt[prev, :, :, mi]
                post = legend_posterior(loglik, params)

        u = stream(state.rng_seed, t, _PROPAGATE).random((n, N_PLAYERS))
        trans = params.transition_matrix
        stay = u < params.p_stay
        moved = np.where(stay, perception, 1 - perception).astype(np.int8)
        if fov.any():
            with np.errstate(divide="ignore"):
                logw += np.log(trans[perception[:, fov], 1]).sum(axis=1)
            moved[:, fov] = 1
        perception = moved

    top = logw.max()
    total = top + np.log(np.exp(logw - top).sum())
    if not np.isfinite(total):
        raise ValueError(f"all particles have zero weight at tick {t}")
    logw -= total
    n_resamples = state.n_resamples
    w = np.exp(logw)
    if 1.0 / np.sum(w * w) < state.config.ess_threshold_fraction * n:
        u0 = stream(state.rng_seed, t, _RESAMPLE).random()
        idx = _systematic_indices(w, u0)
        perception, counts = perception[idx], counts[idx]
        loglik, post = loglik[idx], post[idx]
        logw = np.full(n, -np.log(n))
        n_resamples += 1

    return replace(state, perception=perception, counts=counts, log_weights=logw,
                   loglik=loglik, legend_post=post, tick=t, n_resamples=n_resamples)


def posterior_snapshot(state: FilterState, params: ModelParams) -> PosteriorSnapshot:
    w = state.weights
    post = np.tensordot(w, state.legend_post, axes=1)
    post /= post.sum()
    p_o = post.sum(axis=1)
    return PosteriorSnapshot(
        t=state.tick,
        p_assignment=p_o @ ASSIGNMENT_TABLE,
        p_team=float(post[:, 1].sum()),
        p_player_legend=np.array([p_o[_O[:, i] == 1].sum() for i in range(N_PLAYERS)]),
        p_perceived=w @ state.perception.astype(float),
    )


def run_trial(grid: ObservationGrid, config: FilterConfig, params: ModelParams,
              seed: int) -> BeliefTrajectory:
    state = init(config, params, seed)
    snaps = []
    for t in range(grid.n_ticks):
        state = step(state, grid.tick(t), params)
        snaps.append(posterior_snapshot(state, params))
    return BeliefTrajectory(tuple(snaps))
