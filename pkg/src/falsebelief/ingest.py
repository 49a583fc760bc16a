"""Raw trial event logs -> 1 Hz observation grids.

Event logs are JSON lines, one record per event::

    {"t": 12.3, "p": 1, "k": "fov"}
    {"t": 14.0, "p": 2, "k": "marker", "marker": 2}
    {"t": 14.1, "p": 3, "k": "pose", "x": 1.0, "y": 2.0, "z": 0.5, "yaw": 90, "pitch": 0}
    {"t": 0.0, "k": "victim", "id": "v7", "x": 4.0, "y": 2.0, "z": 0.5}

Coordinates are right-handed with ``z`` up; ``yaw`` is measured counter-
clockwise from ``+x`` in the horizontal plane and ``pitch`` is positive
looking up, both in degrees.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np

from .model import MarkerKind, N_PLAYERS, ObservationGrid

MISSION_SECONDS = 900.0


class IngestError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class EventKind(enum.Enum):
    FOV = "fov"
    MARKER = "marker"
    POSE = "pose"
    VICTIM = "victim"


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    z: float
    yaw: float
    pitch: float

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)


@dataclass(frozen=True)
class TrialEvent:
    time: float
    player: Optional[int]
    kind: EventKind
    marker: Optional[int] = None       # 1, 2 or 3 for MARKER
    pose: Optional[Pose] = None        # for POSE
    victim_id: Optional[str] = None    # for VICTIM
    position: Optional[tuple] = None   # for VICTIM
    line: Optional[int] = field(default=None, compare=False)

    def to_record(self) -> dict:
        rec = {"t": self.time}
        if self.player is not None:
            rec["p"] = self.player
        rec["k"] = self.kind.value
        if self.kind is EventKind.MARKER:
            rec["marker"] = self.marker
        elif self.kind is EventKind.POSE:
            rec.update(x=self.pose.x, y=self.pose.y, z=self.pose.z,
                       yaw=self.pose.yaw, pitch=self.pose.pitch)
        elif self.kind is EventKind.VICTIM:
            rec["id"] = self.victim_id
            rec.update(zip("xyz", self.position))
        return rec


@dataclass
class TrialEventLog:
    events: list[TrialEvent]
    mission_length: float = MISSION_SECONDS

    def __post_init__(self):
        if not self.mission_length > 0:
            raise ValueError("mission_length must be positive")


@dataclass(frozen=True)
class FovGeometry:
    horizontal_half_angle: float = 62.5
    vertical_half_angle: float = 35.0

    def __post_init__(self):
        for a in (self.horizontal_half_angle, self.vertical_half_angle):
            if not 0.0 < a < 90.0:
                raise ValueError(f"half-angles must lie in (0, 90) degrees, got {a}")


@dataclass(frozen=True)
class Diagnostic:
    level: str  # "warning" or "fatal"
    message: str
    line: Optional[int] = None

    def __str__(self):
        where = f"line {self.line}: " if self.line is not None else ""
        return f"{self.level}: {where}{self.message}"


def in_fov(pose: Pose, victim, geom: FovGeometry = FovGeometry()) -> bool:
    """Angular frustum test of ``victim`` (xyz) against the view of ``pose``."""
    eye = pose.position
    v = np.asarray(victim, dtype=float) - eye
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite([pose.yaw, pose.pitch]))):
        raise ValueError("non-finite coordinates")
    if not np.any(v):
        raise ValueError("victim coincides with the eye point")
    yaw, pitch = math.radians(pose.yaw), math.radians(pose.pitch)
    forward = np.array([math.cos(pitch) * math.cos(yaw), math.cos(pitch) * math.sin(yaw),
                        math.sin(pitch)])
    right = np.array([math.sin(yaw), -math.cos(yaw), 0.0])
    up = np.cross(right, forward)
    a, b, c = v @ forward, v @ right, v @ up
    horizontal = math.degrees(math.atan2(abs(b), a))
    vertical = math.degrees(math.atan2(abs(c), math.hypot(a, b)))
    return horizontal <= geom.horizontal_half_angle and vertical <= geom.vertical_half_angle


def _parse_record(rec: dict, line: int) -> TrialEvent:
    try:
        t = float(rec["t"])
        kind = EventKind(rec["k"])
    except (KeyError, ValueError, TypeError) as exc:
        raise IngestError(f"malformed event ({exc})", line) from None
    player = rec.get("p")
    if player is not None:
        if not isinstance(player, int) or isinstance(player, bool):
            raise IngestError(f"player id must be an integer, got {player!r}", line)
    elif kind is not EventKind.VICTIM:
        raise IngestError("missing player id", line)
    try:
        if kind is EventKind.MARKER:
            marker = int(rec["marker"])
            if marker not in (1, 2, 3):
                raise IngestError(f"unknown marker block {marker}", line)
            return TrialEvent(t, player, kind, marker=marker, line=line)
        if kind is EventKind.POSE:
            pose = Pose(*(float(rec[k]) for k in ("x", "y", "z", "yaw", "pitch")))
            return TrialEvent(t, player, kind, pose=pose, line=line)
        if kind is EventKind.VICTIM:
            pos = tuple(float(rec[k]) for k in "xyz")
            return TrialEvent(t, player, kind, victim_id=str(rec["id"]), position=pos,
                              line=line)
    except KeyError as exc:
        raise IngestError(f"{kind.value} event missing field {exc}", line) from None
    return TrialEvent(t, player, kind, line=line)


def parse_events(lines: Iterable[str], mission_length: float = MISSION_SECONDS) -> TrialEventLog:
    events = []
    for lineno, raw in enumerate(lines, start=1):
        raw = raw.strip()
        if not raw:
            continue
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise IngestError(f"invalid JSON ({exc.msg})", lineno) from None
        if not isinstance(rec, dict):
            raise IngestError("event must be a JSON object", lineno)
        events.append(_parse_record(rec, lineno))
    return TrialEventLog(events, mission_length)


def read_event_log(path: Union[str, Path], mission_length: float = MISSION_SECONDS) -> TrialEventLog:
    with open(path, encoding="utf-8") as fh:
        return parse_events(fh, mission_length)


def write_event_log(log: TrialEventLog, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ev in log.events:
            fh.write(json.dumps(ev.to_record()) + "\n")


def _where(ev: TrialEvent, index: int) -> int:
    return ev.line if ev.line is not None else index + 1


def validate(log: TrialEventLog, tick_seconds: float = 1.0) -> list[Diagnostic]:
    """Fatal problems and warnings about a log; never raises."""
    out = []
    if not log.events:
        out.append(Diagnostic("warning", "no evidence: the log has no events"))
        return out
    last = -math.inf
    limit = (math.ceil(log.mission_length / tick_seconds) + 1) * tick_seconds
    n_markers = 0
    for k, ev in enumerate(log.events):
        line = _where(ev, k)
        if not math.isfinite(ev.time) or ev.time < 0:
            out.append(Diagnostic("fatal", f"negative or non-finite timestamp {ev.time}", line))
        elif ev.time < last:
            out.append(Diagnostic("fatal", f"event at {ev.time} s is out of order", line))
        elif ev.time >= limit:
            out.append(Diagnostic("fatal", f"event at {ev.time} s is after the mission end", line))
        if math.isfinite(ev.time):
            last = max(last, ev.time)
        if ev.kind is not EventKind.VICTIM or ev.player is not None:
            if ev.player not in range(1, N_PLAYERS + 1):
                out.append(Diagnostic("fatal", f"unknown player id {ev.player!r}", line))
        if ev.kind is EventKind.MARKER and ev.marker in (1, 2):
            n_markers += 1
    if n_markers == 0:
        out.append(Diagnostic("warning", "no marker 1/2 placements: the assignment posterior "
                                         "will stay uniform (1/3 each)"))
    return out


def discretize(log: TrialEventLog, tick_seconds: float = 1.0,
               geom: FovGeometry = FovGeometry()) -> ObservationGrid:
    """Bin events into ticks ``[t, t + tick_seconds)``.

    Marker 3 placements are dropped and placements falling in tick 0 move to
    tick 1. Poses are tested against every victim position seen so far.
    """
    n_ticks = math.ceil(log.mission_length / tick_seconds) + 1
    fov = np.zeros((n_ticks, N_PLAYERS), dtype=bool)
    placements = [[[] for _ in range(N_PLAYERS)] for _ in range(n_ticks)]
    victims = {}
    last = -math.inf
    for k, ev in enumerate(log.events):
        line = _where(ev, k)
        if not math.isfinite(ev.time) or ev.time < 0:
            raise IngestError(f"invalid timestamp {ev.time}", line)
        if ev.time < last:
            raise IngestError(f"event at {ev.time} s is out of order", line)
        last = ev.time
        tick = int(math.floor(ev.time / tick_seconds))
        if tick >= n_ticks:
            raise IngestError(f"event at {ev.time} s is after the mission end", line)
        if ev.kind is EventKind.VICTIM:
            victims[ev.victim_id] = ev.position
            continue
        if ev.player not in range(1, N_PLAYERS + 1):
            raise IngestError(f"unknown player id {ev.player!r}", line)
        i = ev.player - 1
        if ev.kind is EventKind.FOV:
            fov[tick, i] = True
        elif ev.kind is EventKind.MARKER:
            if ev.marker in (1, 2):
                placements[max(tick, 1)][i].append(MarkerKind(ev.marker))
        elif ev.kind is EventKind.POSE:
            if any(in_fov(ev.pose, pos, geom) for pos in victims.values()
                   if np.any(np.asarray(pos) != ev.pose.position)):
                fov[tick, i] = True
    return ObservationGrid(fov, placements, tick_seconds)


def grid_to_log(grid: ObservationGrid) -> TrialEventLog:
    """Synthetic event log whose discretisation reproduces ``grid`` exactly."""
    events = []
    step = grid.tick_seconds
    for t in range(grid.n_ticks):
        for i in range(grid.n_players):
            if grid.fov[t, i]:
                events.append(TrialEvent(t * step, i + 1, EventKind.FOV))
        k = 0
        for i in range(grid.n_players):
            for m in grid.placements[t][i]:
                k += 1
                events.append(TrialEvent(t * step + step * k / 64.0, i + 1, EventKind.MARKER,
                                         marker=int(m)))
    return TrialEventLog(events, mission_length=grid.horizon * step)


GRID_COLUMNS = ("t", "player", "fov", "markers")


def write_grid_csv(grid: ObservationGrid, path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(GRID_COLUMNS)
        for t in range(grid.n_ticks):
            for i in range(grid.n_players):
                w.writerow([t, i + 1, int(grid.fov[t, i]),
                            ";".join(str(int(m)) for m in grid.placements[t][i])])


def read_grid_csv(path: Union[str, Path], tick_seconds: float = 1.0) -> ObservationGrid:
    rows = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader, ()))
        if header != GRID_COLUMNS:
            raise IngestError(f"unexpected grid header {header}", 1)
        for lineno, row in enumerate(reader, start=2):
            try:
                t, p, f = int(row[0]), int(row[1]), int(row[2])
                marks = tuple(MarkerKind(int(x)) for x in row[3].split(";") if x)
            except (ValueError, IndexError) as exc:
                raise IngestError(f"bad grid row ({exc})", lineno) from None
            if p not in range(1, N_PLAYERS + 1):
                raise IngestError(f"unknown player id {p}", lineno)
            rows[t, p - 1] = (bool(f), marks)
    n_ticks = max(t for t, _ in rows) + 1 if rows else 0
    if len(rows) != n_ticks * N_PLAYERS:
        raise IngestError("grid is not rectangular")
    fov = np.array([[rows[t, i][0] for i in range(N_PLAYERS)] for t in range(n_ticks)])
    placements = [[rows[t, i][1] for i in range(N_PLAYERS)] for t in range(n_ticks)]
    return ObservationGrid(fov, placements, tick_seconds)
