"""Exact posterior by enumeration of the static latents.

For each player and each of the four ``(O_i, T)`` pairs a normalised
two-state forward vector is carried with its accumulated log-normaliser.
The 16 ``(O_1, O_2, O_3, T)`` configurations are then weighted by prior
times the product of per-player marginal likelihoods.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import xlogy

from .model import (
    ASSIGNMENT_TABLE,
    Assignment,
    Legend,
    ModelParams,
    N_PLAYERS,
    ObservationGrid,
    TickObservation,
)

TIE_TOLERANCE = 1e-9

TRAJECTORY_COLUMNS = ("t", "pA_1", "pA_2", "pA_3", "pT_B", "pO1_B", "pO2_B", "pO3_B",
                      "pP1", "pP2", "pP3")


@dataclass(frozen=True, eq=False)
class PosteriorSnapshot:
    t: int
    p_assignment: np.ndarray     # (3,) over Assignment
    p_team: float                # P(T = B)
    p_player_legend: np.ndarray  # (3,) P(O_i = B)
    p_perceived: np.ndarray      # (3,) P(P_i,t = Perceived)

    def as_row(self) -> list[float]:
        return [self.t, *self.p_assignment, self.p_team, *self.p_player_legend,
                *self.p_perceived]


@dataclass(frozen=True, eq=False)
class BeliefTrajectory:
    snapshots: tuple[PosteriorSnapshot, ...]

    def __len__(self):
        return len(self.snapshots)

    def __getitem__(self, t) -> PosteriorSnapshot:
        return self.snapshots[t]

    @property
    def p_assignment(self) -> np.ndarray:
        return np.array([s.p_assignment for s in self.snapshots])

    @property
    def final(self) -> PosteriorSnapshot:
        return self.snapshots[-1]

    def as_array(self) -> np.ndarray:
        return np.array([s.as_row() for s in self.snapshots])

    def write_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(TRAJECTORY_COLUMNS)
            for s in self.snapshots:
                row = s.as_row()
                writer.writerow([int(row[0])] + [repr(float(x)) for x in row[1:]])

    @classmethod
    def read_csv(cls, path: Union[str, Path]) -> "BeliefTrajectory":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader))
            if header != TRAJECTORY_COLUMNS:
                raise ValueError(f"unexpected trajectory header {header}")
            snaps = []
            for row in reader:
                x = [float(v) for v in row]
                snaps.append(PosteriorSnapshot(int(x[0]), np.array(x[1:4]), x[4],
                                               np.array(x[5:8]), np.array(x[8:11])))
        return cls(tuple(snaps))


def _emission_terms(params: ModelParams):
    table = params.theta_table  # [p, o, T]
    # -> [o, T, p] to match the forward-vector layout below
    return np.moveaxis(table, 0, -1)


def _log_emission(n1, n2, theta_otp):
    """Log-likelihood of ``n1`` Marker1 and ``n2`` Marker2 draws per slot."""
    return xlogy(n1, theta_otp) + xlogy(n2, 1.0 - theta_otp)


class _ForwardBank:
    """Forward vectors for a batch of independent (player, O, T) chains.

    ``alpha`` has shape ``batch + (2,)`` and is normalised over the last
    axis; ``loglik`` holds the log marginal likelihood of the evidence seen.
    """

    def __init__(self, params: ModelParams, batch: tuple):
        self.trans = params.transition_matrix
        self.alpha = np.broadcast_to(params.perception_prior, batch + (2,)).copy()
        self.loglik = np.zeros(batch)

    def _absorb(self, unnorm: np.ndarray, offset: np.ndarray) -> None:
        s = unnorm.sum(axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            self.loglik = self.loglik + offset + np.log(s)
            alpha = unnorm / s[..., None]
        dead = ~(s > 0)
        if dead.any():
            self.loglik = np.where(dead, -np.inf, self.loglik)
            alpha[dead] = 0.5
        self.alpha = alpha

    def start(self, fov: np.ndarray) -> None:
        # fov broadcasts against the batch shape minus the state axis
        unnorm = self.alpha.copy()
        unnorm[..., 0] = np.where(fov, 0.0, unnorm[..., 0])
        self._absorb(unnorm, np.zeros(self.loglik.shape))

    def advance(self, fov: np.ndarray, loge: np.ndarray) -> None:
        """Fold tick-t placement log-likelihoods onto the t-1 state, transition, clamp."""
        with np.errstate(invalid="ignore"):
            m = loge.max(axis=-1)
            m = np.where(np.isfinite(m), m, 0.0)
            weighted = self.alpha * np.exp(loge - m[..., None])
        unnorm = weighted @ self.trans
        unnorm[..., 0] = np.where(fov, 0.0, unnorm[..., 0])
        self._absorb(unnorm, m)


def forward_marginal_likelihood(player_obs: Sequence[TickObservation], o: Legend,
                                t_legend: Legend, params: ModelParams) -> float:
    """Log marginal likelihood of one player's evidence given ``(O, T)``."""
    if len(player_obs) == 0:
        raise ValueError("observation sequence must be non-empty")
    if player_obs[0].placements:
        raise ValueError("tick 0 cannot carry marker placements")
    theta = _emission_terms(params)[int(o), int(t_legend)]
    bank = _ForwardBank(params, ())
    bank.start(np.asarray(player_obs[0].fov_victim))
    for obs in player_obs[1:]:
        n1 = sum(1 for m in obs.placements if m == 1)
        bank.advance(np.asarray(obs.fov_victim),
                     _log_emission(n1, len(obs.placements) - n1, theta))
    return float(bank.loglik)


# Index helpers for the 16 joint configurations (o1, o2, o3, T).
_O = np.array([[(k >> (2 - i)) & 1 for i in range(N_PLAYERS)] for k in range(8)])


def _joint_log_weights(loglik: np.ndarray, params: ModelParams) -> np.ndarray:
    """Combine per-player ``loglik[i, o, T]`` into log-weights ``[k, T]``.

    ``k`` enumerates legend triples with player 1 as the most significant bit.
    """
    with np.errstate(divide="ignore"):
        log_o = np.log([1.0 - params.mu_O, params.mu_O])
        log_t = np.log([1.0 - params.mu_T, params.mu_T])
    lw = np.tile(log_t, (8, 1))
    for i in range(N_PLAYERS):
        lw = lw + log_o[_O[:, i]][:, None] + loglik[i, _O[:, i], :]
    return lw


def _snapshot_from_joint(t: int, lw: np.ndarray, alpha: np.ndarray) -> PosteriorSnapshot:
    top = lw.max()
    if not np.isfinite(top):
        raise ValueError(f"evidence up to tick {t} has zero probability under the parameters")
    post = np.exp(lw - top)  # [k, T]
    post /= post.sum()
    p_o = post.sum(axis=1)
    p_assignment = p_o @ ASSIGNMENT_TABLE
    p_team = float(post[:, 1].sum())
    p_legend = np.array([p_o[_O[:, i] == 1].sum() for i in range(N_PLAYERS)])
    p_perceived = np.empty(N_PLAYERS)
    for i in range(N_PLAYERS):
        # marginal over (O_i, T) for player i
        m_ot = np.array([[post[_O[:, i] == o, tt].sum() for tt in (0, 1)] for o in (0, 1)])
        p_perceived[i] = float((m_ot * alpha[i, :, :, 1]).sum())
    return PosteriorSnapshot(t, p_assignment, p_team, p_legend, p_perceived)


def exact_posterior(grid: ObservationGrid, params: ModelParams) -> BeliefTrajectory:
    """Filtered posterior at every tick, computed in one left-to-right sweep."""
    if grid.n_players != N_PLAYERS:
        raise ValueError(f"exact posterior needs {N_PLAYERS} players, got {grid.n_players}")
    theta = _emission_terms(params)
    bank = _ForwardBank(params, (N_PLAYERS, 2, 2))
    counts = grid.marker_counts[:, :, :, None, None, None]
    snaps = []
    bank.start(grid.fov[0][:, None, None])
    snaps.append(_snapshot_from_joint(0, _joint_log_weights(bank.loglik, params), bank.alpha))
    for t in range(1, grid.n_ticks):
        bank.advance(grid.fov[t][:, None, None],
                     _log_emission(counts[t, :, 0], counts[t, :, 1], theta))
        snaps.append(_snapshot_from_joint(t, _joint_log_weights(bank.loglik, params),
                                          bank.alpha))
    return BeliefTrajectory(tuple(snaps))


def predict_assignment(traj: BeliefTrajectory, at_tick: int) -> Optional[Assignment]:
    """Argmax assignment at ``at_tick``; ``None`` when there is no unique winner."""
    if not 0 <= at_tick < len(traj):
        raise IndexError(f"tick {at_tick} outside trajectory of length {len(traj)}")
    return argmax_assignment(traj[at_tick].p_assignment)


def argmax_assignment(p: Sequence[float]) -> Optional[Assignment]:
    p = np.asarray(p, dtype=float)
    best = p.max()
    if np.count_nonzero(p >= best - TIE_TOLERANCE) > 1:
        return None
    return Assignment(int(p.argmax()))
