"""Domain types, conditional distributions and the generative simulator.

Every player carries an original legend ``O`` and a per-second perception
state ``P``; the team shares one adopted legend ``T``. Evidence is a victim
field-of-view flag ``F`` per tick and the kinds of marker blocks placed.
Which player received legend B (the assignment ``A``) is the quantity to
infer.

Evidence semantics used throughout the package:

* ``F = True`` clamps ``P_t`` to Perceived; ``F = False`` carries no
  information, so perception decays through the transition matrix.
* a marker placed at tick ``t`` is emitted given ``(P_{t-1}, O, T)``; ticks
  without placements contribute nothing, and several placements in one tick
  are independent draws from the same emission.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np
from scipy.special import xlogy

from . import _hmm
from ._random import stream


class Legend(enum.IntEnum):
    A = 0
    B = 1  # meanings of markers 1 and 2 swapped w.r.t. A


class MarkerKind(enum.IntEnum):
    MARKER1 = 1
    MARKER2 = 2


class Perception(enum.IntEnum):
    NOT_PERCEIVED = 0
    PERCEIVED = 1


class Assignment(enum.IntEnum):
    P1_GOT_B = 0
    P2_GOT_B = 1
    P3_GOT_B = 2


N_PLAYERS = 3


@dataclass(frozen=True)
class EmissionConfig:
    """Parent configuration of a marker emission.

    ``index`` is the 1-based slot ``4*[P] + 2*[O=B] + [T=B] + 1`` used by the
    parameter file format; ``slot`` is the same thing 0-based.
    """

    prev_perception: Perception
    player_legend: Legend
    team_legend: Legend

    @property
    def slot(self) -> int:
        return 4 * int(self.prev_perception) + 2 * int(self.player_legend) + int(self.team_legend)

    @property
    def index(self) -> int:
        return self.slot + 1

    @classmethod
    def from_index(cls, index: int) -> "EmissionConfig":
        if not 1 <= index <= 8:
            raise ValueError(f"emission index must be in 1..8, got {index}")
        s = index - 1
        return cls(Perception(s >> 2), Legend((s >> 1) & 1), Legend(s & 1))

    @classmethod
    def all(cls) -> list["EmissionConfig"]:
        return [cls.from_index(j) for j in range(1, 9)]


def _check_prob(name: str, value: float) -> None:
    if not (0.0 <= value <= 1.0) or math.isnan(value):
        raise ValueError(f"{name} must be a probability in [0, 1], got {value!r}")


@dataclass(frozen=True)
class ModelParams:
    """All distribution parameters of the model.

    ``theta[s]`` is the probability of Marker1 for emission slot ``s``
    (0-based, see :class:`EmissionConfig`). The ``mu_*`` priors give the
    probability of LegendB (for ``T`` and each ``O``) and of Perceived at
    tick 0. ``p_stay`` is the self-transition probability of perception.
    """

    theta: tuple[float, ...] = (0.5,) * 8
    mu_T: float = 0.5
    mu_O: float = 0.5
    mu_P: float = 0.5
    p_stay: float = 0.8
    n_players: int = N_PLAYERS

    def __post_init__(self):
        theta = tuple(float(x) for x in np.asarray(self.theta, dtype=float).ravel())
        object.__setattr__(self, "theta", theta)
        if len(theta) != 8:
            raise ValueError(f"theta must have 8 entries, got {len(theta)}")
        for j, x in enumerate(theta, start=1):
            _check_prob(f"theta[{j}]", x)
        for name in ("mu_T", "mu_O", "mu_P", "p_stay"):
            _check_prob(name, getattr(self, name))
        if self.n_players != N_PLAYERS:
            raise ValueError("the model is defined for exactly three players")

    @property
    def theta_array(self) -> np.ndarray:
        return np.array(self.theta)

    @property
    def theta_table(self) -> np.ndarray:
        """Marker1 probability indexed ``[prev_perception, player_legend, team_legend]``."""
        return self.theta_array.reshape(2, 2, 2)

    @property
    def transition_matrix(self) -> np.ndarray:
        s = self.p_stay
        return np.array([[s, 1.0 - s], [1.0 - s, s]])

    @property
    def perception_prior(self) -> np.ndarray:
        return np.array([1.0 - self.mu_P, self.mu_P])

    def with_theta(self, theta) -> "ModelParams":
        return ModelParams(tuple(theta), self.mu_T, self.mu_O, self.mu_P, self.p_stay)

    def to_text(self) -> str:
        lines = ["# marker-emission and prior parameters"]
        lines += [f"theta[{j}] = {x:.17g}" for j, x in enumerate(self.theta, start=1)]
        for name in ("mu_T", "mu_O", "mu_P", "p_stay"):
            lines.append(f"{name} = {getattr(self, name):.17g}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ModelParams":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            try:
                values[key] = float(value)
            except ValueError:
                raise ValueError(f"line {lineno}: bad number {value!r}") from None
        theta = []
        for j in range(1, 9):
            key = f"theta[{j}]"
            if key not in values:
                raise ValueError(f"missing {key}")
            theta.append(values.pop(key))
        kwargs = {k: values.pop(k) for k in ("mu_T", "mu_O", "mu_P", "p_stay") if k in values}
        if values:
            raise ValueError(f"unknown keys: {sorted(values)}")
        return cls(tuple(theta), **kwargs)

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ModelParams":
        return cls.from_text(Path(path).read_text())


@dataclass(frozen=True)
class TickObservation:
    fov_victim: bool = False
    placements: tuple[MarkerKind, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "fov_victim", bool(self.fov_victim))
        object.__setattr__(self, "placements", tuple(MarkerKind(m) for m in self.placements))


@dataclass(frozen=True, eq=False)
class ObservationGrid:
    """Per-tick, per-player evidence.

    ``fov`` is a boolean array of shape ``(n_ticks, n_players)`` and
    ``placements[t][i]`` is the ordered tuple of markers player ``i`` placed
    during tick ``t``. Tick 0 never carries placements.
    """

    fov: np.ndarray
    placements: tuple
    tick_seconds: float = 1.0

    def __post_init__(self):
        fov = np.array(self.fov, dtype=bool)
        if fov.ndim != 2 or fov.shape[0] < 1:
            raise ValueError("fov must be a 2-d (ticks, players) array with at least one tick")
        fov.setflags(write=False)
        n_ticks, n_players = fov.shape
        placements = tuple(tuple(tuple(MarkerKind(m) for m in cell) for cell in row)
                           for row in self.placements)
        if len(placements) != n_ticks or any(len(row) != n_players for row in placements):
            raise ValueError("placements must be rectangular and match fov")
        if any(placements[0]):
            raise ValueError("tick 0 cannot carry marker placements")
        object.__setattr__(self, "fov", fov)
        object.__setattr__(self, "placements", placements)
        counts = np.zeros((n_ticks, n_players, 2), dtype=np.int64)
        for t, row in enumerate(placements):
            for i, cell in enumerate(row):
                for m in cell:
                    counts[t, i, m - 1] += 1
        counts.setflags(write=False)
        object.__setattr__(self, "_counts", counts)

    @classmethod
    def from_ticks(cls, rows: Sequence[Sequence[TickObservation]], tick_seconds: float = 1.0):
        fov = [[obs.fov_victim for obs in row] for row in rows]
        placements = [[obs.placements for obs in row] for row in rows]
        return cls(np.array(fov, dtype=bool).reshape(len(rows), -1), placements, tick_seconds)

    @classmethod
    def empty(cls, horizon: int, n_players: int = N_PLAYERS):
        return cls(np.zeros((horizon + 1, n_players), dtype=bool),
                   [[()] * n_players for _ in range(horizon + 1)])

    @property
    def n_ticks(self) -> int:
        return self.fov.shape[0]

    @property
    def horizon(self) -> int:
        return self.fov.shape[0] - 1

    @property
    def n_players(self) -> int:
        return self.fov.shape[1]

    @property
    def marker_counts(self) -> np.ndarray:
        """Integer array ``(n_ticks, n_players, 2)``: Marker1 and Marker2 counts."""
        return self._counts

    @property
    def total_placements(self) -> int:
        return int(self._counts.sum())

    def tick(self, t: int) -> tuple[TickObservation, ...]:
        return tuple(TickObservation(bool(self.fov[t, i]), self.placements[t][i])
                     for i in range(self.n_players))

    def player(self, i: int) -> list[TickObservation]:
        return [TickObservation(bool(self.fov[t, i]), self.placements[t][i])
                for t in range(self.n_ticks)]

    def prefix(self, t: int) -> "ObservationGrid":
        """Grid restricted to ticks ``0..t``."""
        return ObservationGrid(self.fov[: t + 1], self.placements[: t + 1], self.tick_seconds)

    def permute_players(self, order: Sequence[int]) -> "ObservationGrid":
        order = list(order)
        return ObservationGrid(self.fov[:, order],
                               [[row[i] for i in order] for row in self.placements],
                               self.tick_seconds)

    def swap_markers(self) -> "ObservationGrid":
        flip = {MarkerKind.MARKER1: MarkerKind.MARKER2, MarkerKind.MARKER2: MarkerKind.MARKER1}
        return ObservationGrid(self.fov,
                               [[tuple(flip[m] for m in cell) for cell in row]
                                for row in self.placements],
                               self.tick_seconds)

    def __eq__(self, other):
        if not isinstance(other, ObservationGrid):
            return NotImplemented
        return (np.array_equal(self.fov, other.fov) and self.placements == other.placements
                and self.tick_seconds == other.tick_seconds)

    def __repr__(self):
        return (f"ObservationGrid(ticks={self.n_ticks}, players={self.n_players}, "
                f"fov_hits={int(self.fov.sum())}, placements={self.total_placements})")


def legends_for(assignment: Assignment) -> tuple[Legend, Legend, Legend]:
    legends = [Legend.A] * N_PLAYERS
    legends[int(assignment)] = Legend.B
    return tuple(legends)


@dataclass(frozen=True, eq=False)
class Latents:
    """A complete assignment of the latent variables of one trial.

    ``assignment`` may be ``None``, in which case the log-joint omits the
    ``p(A | O)`` factor, which is the same as summing ``A`` out.
    """

    perception_paths: np.ndarray  # (n_players, n_ticks) of 0/1
    legends: tuple[Legend, ...]
    team_legend: Legend
    assignment: Optional[Assignment] = None


@dataclass(frozen=True, eq=False)
class GroundTruth:
    assignment: Assignment
    team_legend: Legend
    perception_paths: np.ndarray  # (3, n_ticks) of 0/1

    @property
    def legends(self) -> tuple[Legend, Legend, Legend]:
        return legends_for(self.assignment)

    def latents(self) -> Latents:
        return Latents(self.perception_paths, self.legends, self.team_legend, self.assignment)

    def __eq__(self, other):
        if not isinstance(other, GroundTruth):
            return NotImplemented
        return (self.assignment == other.assignment and self.team_legend == other.team_legend
                and np.array_equal(self.perception_paths, other.perception_paths))


def perception_transition(prev: Perception, params: ModelParams) -> dict[Perception, float]:
    row = params.transition_matrix[int(prev)]
    return {Perception.NOT_PERCEIVED: float(row[0]), Perception.PERCEIVED: float(row[1])}


def marker_emission(config: EmissionConfig, params: ModelParams) -> dict[MarkerKind, float]:
    p1 = params.theta[config.slot]
    return {MarkerKind.MARKER1: p1, MarkerKind.MARKER2: 1.0 - p1}


# Row k of this table is p(A | O) for the legend triple whose bits (player 1
# most significant) spell k; LegendB = 1.
def _assignment_table() -> np.ndarray:
    table = np.full((8, 3), 1.0 / 3.0)
    for a in Assignment:
        k = sum(int(o) << (2 - i) for i, o in enumerate(legends_for(a)))
        table[k] = 0.0
        table[k, int(a)] = 1.0
    return table


ASSIGNMENT_TABLE = _assignment_table()
ASSIGNMENT_TABLE.setflags(write=False)


def assignment_cpd(o1: Legend, o2: Legend, o3: Legend) -> dict[Assignment, float]:
    row = ASSIGNMENT_TABLE[4 * int(o1) + 2 * int(o2) + int(o3)]
    return {a: float(row[int(a)]) for a in Assignment}


@dataclass
class FovBursts:
    """Synthetic victim sightings: bursts of consecutive FoV hits.

    A burst starts with probability ``onset`` on any tick outside a burst and
    lasts a geometric number of ticks with mean ``mean_length``.
    """

    onset: float = 0.1
    mean_length: float = 4.0

    def __call__(self, rng: np.random.Generator, n_ticks: int, n_players: int) -> np.ndarray:
        out = np.zeros((n_ticks, n_players), dtype=bool)
        for i in range(n_players):
            t = 0
            while t < n_ticks:
                if rng.random() < self.onset:
                    length = int(rng.geometric(1.0 / self.mean_length))
                    out[t : t + length, i] = True
                    t += length
                else:
                    t += 1
        return out


def follow_legend_theta(fidelity: float = 0.9) -> tuple[float, ...]:
    """Emission parameters under which each placement follows the placer's own legend.

    Under LegendA marker 2 means "victim" and marker 1 "no victim" (LegendB
    swaps them); the marker matching the previous perception under the
    player's legend is chosen with probability ``fidelity``, whatever ``T``.
    """
    _check_prob("fidelity", fidelity)
    return tuple(fidelity if (s >> 2) == ((s >> 1) & 1) else 1.0 - fidelity for s in range(8))


FovSchedule = Union[None, np.ndarray, Callable[[np.random.Generator, int, int], np.ndarray]]


def log_emission_table(params: ModelParams) -> np.ndarray:
    """Log emission probabilities indexed ``[prev_perception, o, T, marker]``."""
    table = params.theta_table
    with np.errstate(divide="ignore"):
        return np.stack([np.log(table), np.log1p(-table)], axis=-1)


def placement_loglik(counts: np.ndarray, params: ModelParams) -> np.ndarray:
    """Log-likelihood of counted placements under every legend pair.

    ``counts[..., p, m]`` counts marker ``m`` placed while the previous-tick
    perception was ``p``; the result is indexed ``[..., o, T]``.
    """
    c = np.asarray(counts)[..., :, None, None, :]
    terms = np.where(c > 0, c * log_emission_table(params), 0.0)
    return terms.sum(axis=(-4, -1))


def simulate_trial(params: ModelParams, horizon: int, placement_rate: float,
                   fov_schedule: FovSchedule = None, seed: int = 0,
                   assignment: Optional[Assignment] = None):
    """Sample a synthetic trial; returns ``(ObservationGrid, GroundTruth)``.

    The assignment is uniform over the three players unless given, the team
    legend is drawn from its prior, and FoV hits come from ``fov_schedule``
    (an array ``(horizon + 1, 3)``, a callable ``(rng, n_ticks, n_players)``
    or ``None`` for :class:`FovBursts` defaults). Perception paths are then
    drawn from the chain conditioned on the FoV clamps, which makes the
    (F, M) data an exact draw from the model. Each player places at most one
    marker per tick, with probability ``placement_rate``.
    """
    if int(horizon) != horizon or horizon < 1:
        raise ValueError(f"horizon must be a positive integer, got {horizon!r}")
    horizon = int(horizon)
    if not 0.0 <= placement_rate <= 1.0:
        raise ValueError(f"placement_rate must be in [0, 1], got {placement_rate!r}")
    n_ticks, n = horizon + 1, N_PLAYERS

    rng = stream(seed, 0)
    if assignment is None:
        assignment = Assignment(int(rng.integers(3)))
    team = Legend(int(rng.random() < params.mu_T))

    if fov_schedule is None:
        fov_schedule = FovBursts()
    if callable(fov_schedule):
        fov = np.asarray(fov_schedule(stream(seed, 1), n_ticks, n), dtype=bool)
    else:
        fov = np.asarray(fov_schedule, dtype=bool)
    if fov.shape != (n_ticks, n):
        raise ValueError(f"fov schedule must have shape {(n_ticks, n)}, got {fov.shape}")

    paths = _hmm.sample_paths(np.zeros((n, n_ticks, 2)), np.full((n, 2), 0.5), fov.T,
                              np.full(n, n_ticks),
                              params.transition_matrix, params.perception_prior,
                              stream(seed, 2))

    legends = legends_for(assignment)
    table = params.theta_table
    rng = stream(seed, 3)
    placed = rng.random((n_ticks, n)) < placement_rate
    kind_u = rng.random((n_ticks, n))
    placed[0] = False
    placements = [[() for _ in range(n)] for _ in range(n_ticks)]
    for t, i in zip(*np.nonzero(placed)):
        p1 = table[paths[i, t - 1], int(legends[i]), int(team)]
        kind = MarkerKind.MARKER1 if kind_u[t, i] < p1 else MarkerKind.MARKER2
        placements[t][i] = (kind,)

    grid = ObservationGrid(fov, placements)
    truth = GroundTruth(assignment, team, paths.astype(np.int8))
    return grid, truth


def player_log_joint(fov: np.ndarray, counts: np.ndarray, path: np.ndarray,
                     legend: Legend, team_legend: Legend, params: ModelParams) -> float:
    """Log-probability of one player's perception path and evidence.

    Covers ``p(P_0) p(F_0|P_0) prod_t p(M_t|P_{t-1},O,T) p(F_t|P_t) p(P_t|P_{t-1})``
    with ``fov`` of shape ``(n_ticks,)`` and ``counts`` of shape ``(n_ticks, 2)``.
    """
    path = np.asarray(path, dtype=np.int64)
    if path.shape != fov.shape or counts.shape != fov.shape + (2,):
        raise ValueError("path, fov and counts must cover the same ticks")
    if np.any(fov & (path == 0)):
        return -math.inf
    with np.errstate(divide="ignore"):
        total = math.log(params.perception_prior[path[0]])
        trans = np.log(params.transition_matrix)
    total += float(trans[path[:-1], path[1:]].sum())
    theta = params.theta_table[path[:-1], int(legend), int(team_legend)]
    total += float(xlogy(counts[1:, 0], theta).sum() + xlogy(counts[1:, 1], 1.0 - theta).sum())
    return total


def log_joint(grid: ObservationGrid, latents: Latents, params: ModelParams) -> float:
    """Log of the full joint density of latents and evidence for one trial."""
    paths = np.asarray(latents.perception_paths)
    n = grid.n_players
    if paths.shape != (n, grid.n_ticks) or len(latents.legends) != n:
        raise ValueError(f"latents do not match a grid of {n} players x {grid.n_ticks} ticks")
    mu_t = params.mu_T if latents.team_legend == Legend.B else 1.0 - params.mu_T
    with np.errstate(divide="ignore"):
        total = float(np.log(mu_t))
        for i in range(n):
            mu_o = params.mu_O if latents.legends[i] == Legend.B else 1.0 - params.mu_O
            total += float(np.log(mu_o))
            total += player_log_joint(grid.fov[:, i], grid.marker_counts[:, i], paths[i],
                                      latents.legends[i], latents.team_legend, params)
        if latents.assignment is not None:
            if n != N_PLAYERS:
                raise ValueError("the assignment factor needs exactly three players")
            pa = assignment_cpd(*latents.legends)[latents.assignment]
            total += float(np.log(pa))
    return total


def sojourn_lengths(path: Iterable[int], state: int = 1) -> list[int]:
    """Lengths of maximal runs of ``state`` that start and end inside ``path``."""
    path = list(path)
    runs, current = [], 0
    started_inside = path[:1] != [state]
    for x in path:
        if x == state:
            current += 1
        else:
            if current and started_inside:
                runs.append(current)
            current = 0
            started_inside = True
    return runs
