import numpy as np
import pytest

from falsebelief.model import (
    Assignment,
    Legend,
    ModelParams,
    ObservationGrid,
    follow_legend_theta,
    simulate_trial,
)
from falsebelief.oracle import (
    BeliefTrajectory,
    argmax_assignment,
    exact_posterior,
    forward_marginal_likelihood,
    predict_assignment,
)

from brute import enumerate_marginals, enumerate_perceived, player_likelihood

MICRO_PARAMS = ModelParams(theta=(0.9, 0.8, 0.3, 0.2, 0.15, 0.25, 0.7, 0.85), mu_T=0.4, mu_O=0.3,
                           mu_P=0.6)
MICRO_GRID = ObservationGrid([[0, 0, 1], [1, 0, 0], [0, 0, 0], [0, 1, 0]],
                             [[(), (), ()], [(1,), (), ()], [(), (2, 1), ()], [(2,), (), (2,)]])


def random_instance(rng):
    theta = tuple(rng.uniform(0.05, 0.95, 8))
    params = ModelParams(theta=theta, mu_T=rng.uniform(0.1, 0.9), mu_O=rng.uniform(0.1, 0.9),
                         mu_P=rng.uniform(0.1, 0.9))
    n_ticks = int(rng.integers(2, 8))  # tau <= 6
    fov = rng.random((n_ticks, 3)) < 0.3
    placements = [[() for _ in range(3)]]
    for _ in range(1, n_ticks):
        placements.append([tuple(int(m) for m in rng.integers(1, 3, size=rng.poisson(0.5)))
                           for _ in range(3)])
    return params, ObservationGrid(fov, placements)


def tv(p, q):
    return 0.5 * np.abs(np.asarray(p) - np.asarray(q)).sum()


def test_micro_instance_frozen_values():
    # values from brute-force enumeration (tests/brute.py)
    final = exact_posterior(MICRO_GRID, MICRO_PARAMS).final
    assert np.allclose(final.p_assignment,
                       [0.35448984648152976, 0.36458677075574214, 0.28092338276272794], atol=1e-12)
    assert final.p_team == pytest.approx(0.4264379057931411, abs=1e-12)
    assert np.allclose(final.p_player_legend,
                       [0.3395824684599595, 0.35335416621820265, 0.2225426933822408], atol=1e-12)
    assert np.allclose(final.p_perceived, [0.6918797196704257, 1.0, 0.6833804475464862], atol=1e-12)


def test_single_marker_hand_value():
    # mu_P = 1 so P_0 is Perceived; one marker 1 from player 1 gives p(O1=B) = 0.9
    params = ModelParams(theta=follow_legend_theta(0.9), mu_P=1.0)
    grid = ObservationGrid(np.zeros((2, 3)), [[(), (), ()], [(1,), (), ()]])
    final = exact_posterior(grid, params).final
    assert final.p_player_legend[0] == pytest.approx(0.9)
    assert np.allclose(final.p_assignment, [7 / 15, 4 / 15, 4 / 15], atol=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_matches_enumeration(seed):
    params, grid = random_instance(np.random.default_rng(seed))
    traj = exact_posterior(grid, params)
    for t in range(grid.n_ticks):
        pa, pt, po = enumerate_marginals(grid.prefix(t), params)
        assert tv(traj[t].p_assignment, pa) < 1e-9
        assert traj[t].p_team == pytest.approx(pt, abs=1e-9)
        assert np.allclose(traj[t].p_player_legend, po, atol=1e-9)
        assert np.allclose(traj[t].p_perceived, enumerate_perceived(grid.prefix(t), params, t),
                           atol=1e-9)


def test_forward_marginal_likelihood_matches_enumeration():
    params, grid = random_instance(np.random.default_rng(42))
    for i in range(3):
        obs = grid.player(i)
        for o in Legend:
            for t_legend in Legend:
                ref = player_likelihood(grid.fov[:, i], [grid.placements[t][i] for t in range(grid.n_ticks)],
                                        int(o), int(t_legend), params)
                assert forward_marginal_likelihood(obs, o, t_legend, params) == pytest.approx(np.log(ref))


def test_prefix_consistency():
    params = ModelParams(theta=follow_legend_theta())
    grid, _ = simulate_trial(params, 120, 0.1, seed=3)
    full = exact_posterior(grid, params)
    for t in (0, 1, 17, 60, 120):
        part = exact_posterior(grid.prefix(t), params)
        assert np.array_equal(part.final.p_assignment, full[t].p_assignment)


def test_player_permutation_symmetry():
    params = ModelParams(theta=follow_legend_theta())
    grid, _ = simulate_trial(params, 200, 0.05, seed=8)
    order = [2, 0, 1]
    base = exact_posterior(grid, params).final.p_assignment
    perm = exact_posterior(grid.permute_players(order), params).final.p_assignment
    assert np.allclose(perm, base[order], atol=1e-12)


def test_marker_swap_symmetry():
    params = MICRO_PARAMS
    swapped = params.with_theta(1.0 - params.theta_array)
    grid, _ = simulate_trial(params, 150, 0.1, seed=11)
    a = exact_posterior(grid, params).final
    b = exact_posterior(grid.swap_markers(), swapped).final
    assert np.allclose(a.p_assignment, b.p_assignment, atol=1e-12)
    assert np.allclose(a.p_perceived, b.p_perceived, atol=1e-12)


def test_uninformative_theta_gives_uniform():
    params = ModelParams()
    grid, _ = simulate_trial(ModelParams(theta=follow_legend_theta()), 300, 0.2, seed=1)
    assert grid.total_placements > 0
    for snap in exact_posterior(grid, params):
        assert np.allclose(snap.p_assignment, 1 / 3, atol=1e-12)


def test_zero_placements_exactly_uniform():
    params = ModelParams(theta=follow_legend_theta())
    grid, _ = simulate_trial(params, 300, 0.0, seed=2)
    traj = exact_posterior(grid, params)
    assert np.abs(traj.p_assignment - 1 / 3).max() < 1e-15
    assert predict_assignment(traj, 300) is None


def test_direction_on_long_trial():
    params = ModelParams(theta=follow_legend_theta())
    grid, truth = simulate_trial(params, 900, 0.05, seed=4)
    assert predict_assignment(exact_posterior(grid, params), 900) == truth.assignment


def test_zero_probability_evidence_rejected():
    params = ModelParams(theta=(1.0,) * 8)  # marker 2 impossible
    grid = ObservationGrid(np.zeros((2, 3)), [[(), (), ()], [(2,), (), ()]])
    with pytest.raises(ValueError):
        exact_posterior(grid, params)


def test_argmax_ties():
    assert argmax_assignment([1 / 3] * 3) is None
    assert argmax_assignment([0.4, 0.4, 0.2]) is None
    assert argmax_assignment([0.34, 0.33, 0.33]) == Assignment.P1_GOT_B


def test_predict_out_of_range():
    traj = exact_posterior(MICRO_GRID, MICRO_PARAMS)
    with pytest.raises(IndexError):
        predict_assignment(traj, 4)


def test_trajectory_csv_roundtrip(tmp_path):
    traj = exact_posterior(MICRO_GRID, MICRO_PARAMS)
    traj.write_csv(tmp_path / "t.csv")
    back = BeliefTrajectory.read_csv(tmp_path / "t.csv")
    assert np.array_equal(back.as_array(), traj.as_array())
