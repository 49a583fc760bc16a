import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from falsebelief.ingest import (
    EventKind,
    FovGeometry,
    IngestError,
    Pose,
    TrialEvent,
    TrialEventLog,
    discretize,
    grid_to_log,
    in_fov,
    parse_events,
    read_event_log,
    read_grid_csv,
    validate,
    write_event_log,
    write_grid_csv,
)
from falsebelief.model import MarkerKind, ModelParams, follow_legend_theta, simulate_trial


def marker(t, p, m):
    return TrialEvent(t, p, EventKind.MARKER, marker=m)


def at_angles(az, el, dist=5.0):
    a, e = math.radians(az), math.radians(el)
    return (dist * math.cos(e) * math.cos(a), dist * math.cos(e) * math.sin(a), dist * math.sin(e))


def test_fov_half_angles():
    eye = Pose(0, 0, 0, 0, 0)
    assert in_fov(eye, (5, 0, 0))
    assert not in_fov(eye, at_angles(63, 0))
    assert in_fov(eye, at_angles(62, 0))
    assert in_fov(eye, at_angles(-62, 0))
    assert not in_fov(eye, at_angles(0, 36))
    assert in_fov(eye, at_angles(0, 34))
    assert not in_fov(eye, (-5, 0, 0))


def test_fov_yaw_and_pitch_directions():
    # yaw 90 looks along +y; pitch 40 looks upward
    assert in_fov(Pose(0, 0, 0, 90, 0), (0, 5, 0))
    assert not in_fov(Pose(0, 0, 0, 90, 0), (5, 0, 0))
    assert in_fov(Pose(1, 1, 1, 0, 40), (1 + 5 * math.cos(math.radians(40)), 1, 1 + 5 * math.sin(math.radians(40))))


def test_fov_rejects_bad_input():
    with pytest.raises(ValueError):
        in_fov(Pose(1, 2, 3, 0, 0), (1, 2, 3))
    with pytest.raises(ValueError):
        in_fov(Pose(0, 0, 0, float("nan"), 0), (1, 0, 0))
    with pytest.raises(ValueError):
        FovGeometry(horizontal_half_angle=90)


@settings(max_examples=200, deadline=None)
@given(st.floats(-180, 180), st.floats(-60, 60), st.floats(-80, 80), st.floats(-80, 80),
       st.floats(0, 360))
def test_fov_rotation_invariance(yaw, pitch, az, el, turn):
    # rotating pose and victim together about the vertical axis
    eye = np.array([1.0, -2.0, 0.5])
    target = eye + np.array(at_angles(az + yaw, el))
    c, s = math.cos(math.radians(turn)), math.sin(math.radians(turn))
    rot = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
    e2, t2 = rot @ eye, rot @ target
    before = in_fov(Pose(*eye, yaw, pitch), target)
    after = in_fov(Pose(*e2, yaw + turn, pitch), t2)
    geom = FovGeometry()
    slack = FovGeometry(geom.horizontal_half_angle + 1e-9, geom.vertical_half_angle + 1e-9)
    tight = FovGeometry(geom.horizontal_half_angle - 1e-9, geom.vertical_half_angle - 1e-9)
    if before != after:
        # only allowed right at the boundary
        assert in_fov(Pose(*eye, yaw, pitch), target, slack) != in_fov(Pose(*eye, yaw, pitch), target, tight)


def test_discretize_binning():
    log = TrialEventLog([
        TrialEvent(0.2, 2, EventKind.FOV),
        marker(0.5, 1, 1),
        marker(3.4, 1, 2),
        marker(5.0, 3, 3),
        marker(10.1, 1, 2),
        marker(10.9, 1, 1),
        TrialEvent(10.95, 3, EventKind.FOV),
    ], mission_length=12)
    grid = discretize(log)
    assert grid.n_ticks == 13
    assert grid.fov[0, 1] and grid.fov[10, 2] and grid.fov.sum() == 2
    assert grid.placements[1][0] == (MarkerKind.MARKER1,)  # shifted from tick 0
    assert grid.placements[3][0] == (MarkerKind.MARKER2,)
    assert grid.placements[10][0] == (MarkerKind.MARKER2, MarkerKind.MARKER1)
    assert all(grid.placements[5][i] == () for i in range(3))
    assert grid.total_placements == 4


def test_discretize_grid_length():
    assert discretize(TrialEventLog([], 900)).n_ticks == 901
    assert discretize(TrialEventLog([], 900.5)).n_ticks == 902


def test_discretize_errors_carry_line_numbers():
    text = "\n".join(json.dumps(r) for r in [
        {"t": 1.0, "p": 1, "k": "fov"},
        {"t": 2.0, "p": 2, "k": "marker", "marker": 1},
        {"t": 1.5, "p": 1, "k": "fov"},
    ])
    with pytest.raises(IngestError) as err:
        discretize(parse_events(text.splitlines()))
    assert err.value.line == 3
    with pytest.raises(IngestError) as err:
        discretize(parse_events(['{"t": 1, "p": 4, "k": "fov"}']))
    assert err.value.line == 1
    with pytest.raises(IngestError) as err:
        parse_events(['{"t": 1, "p": 1, "k": "fov"}', "not json"])
    assert err.value.line == 2
    with pytest.raises(IngestError):
        parse_events(['{"t": 1, "p": 1, "k": "marker"}'])
    with pytest.raises(IngestError):
        parse_events(['{"t": 1, "p": 1, "k": "marker", "marker": 4}'])


def test_pose_events_drive_fov():
    lines = [
        {"t": 0.0, "k": "victim", "id": "v1", "x": 10, "y": 0, "z": 0},
        {"t": 2.3, "p": 1, "k": "pose", "x": 0, "y": 0, "z": 0, "yaw": 0, "pitch": 0},
        {"t": 3.1, "p": 1, "k": "pose", "x": 0, "y": 0, "z": 0, "yaw": 180, "pitch": 0},
        {"t": 4.0, "p": 2, "k": "pose", "x": 10, "y": 5, "z": 0, "yaw": -90, "pitch": 0},
    ]
    grid = discretize(parse_events([json.dumps(r) for r in lines], mission_length=6))
    assert grid.fov[2, 0] and not grid.fov[3, 0] and grid.fov[4, 1]
    assert grid.fov.sum() == 2


def test_validate_diagnostics():
    assert [d.level for d in validate(TrialEventLog([]))] == ["warning"]
    assert "no evidence" in validate(TrialEventLog([]))[0].message
    diags = validate(TrialEventLog([TrialEvent(-1.0, 1, EventKind.FOV)]))
    assert any(d.level == "fatal" for d in diags)
    diags = validate(TrialEventLog([TrialEvent(1.0, 1, EventKind.FOV), marker(2.0, 2, 3)]))
    assert [d.level for d in diags] == ["warning"]
    assert "uniform" in diags[0].message
    diags = validate(TrialEventLog([TrialEvent(1.0, 7, EventKind.FOV), marker(2.0, 2, 1)]))
    assert [d.level for d in diags] == ["fatal"]


def test_grid_log_roundtrip(tmp_path):
    grid, _ = simulate_trial(ModelParams(theta=follow_legend_theta()), 120, 0.3, seed=1)
    log = grid_to_log(grid)
    assert discretize(log) == grid
    write_event_log(log, tmp_path / "log.jsonl")
    assert discretize(read_event_log(tmp_path / "log.jsonl", mission_length=120)) == grid
    n_events = sum(1 for e in log.events if e.kind is EventKind.MARKER)
    assert n_events == grid.total_placements


def test_grid_csv_roundtrip(tmp_path):
    grid, _ = simulate_trial(ModelParams(theta=follow_legend_theta()), 60, 0.5, seed=2)
    write_grid_csv(grid, tmp_path / "g.csv")
    assert read_grid_csv(tmp_path / "g.csv") == grid
    rows = (tmp_path / "g.csv").read_text().splitlines()
    assert rows[0] == "t,player,fov,markers"
    assert len(rows) == 1 + 61 * 3


def test_grid_csv_errors(tmp_path):
    (tmp_path / "bad.csv").write_text("t,player,fov,markers\n0,1,0,\n0,2,x,\n")
    with pytest.raises(IngestError) as err:
        read_grid_csv(tmp_path / "bad.csv")
    assert err.value.line == 3
