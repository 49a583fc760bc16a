import numpy as np
import pytest

from falsebelief import rbpf
from falsebelief.model import (
    ModelParams,
    ObservationGrid,
    TickObservation,
    follow_legend_theta,
    placement_loglik,
    simulate_trial,
)
from falsebelief.oracle import exact_posterior

from brute import enumerate_marginals
from plain_pf import plain_pf_final

PARAMS = ModelParams(theta=follow_legend_theta())
MIXED = ModelParams(theta=(0.9, 0.8, 0.3, 0.2, 0.15, 0.25, 0.7, 0.85), mu_T=0.4, mu_O=0.3, mu_P=0.6)


def tv(p, q):
    return 0.5 * np.abs(np.asarray(p) - np.asarray(q)).sum()


def test_config_validation():
    with pytest.raises(ValueError):
        rbpf.FilterConfig(n_particles=0)
    with pytest.raises(ValueError):
        rbpf.FilterConfig(ess_threshold_fraction=0.0)
    with pytest.raises(ValueError):
        rbpf.FilterConfig(resampling="multinomial")


def test_deterministic_under_seed():
    grid, _ = simulate_trial(PARAMS, 150, 0.1, seed=1)
    cfg = rbpf.FilterConfig(n_particles=500)
    a = rbpf.run_trial(grid, cfg, PARAMS, seed=7).as_array()
    b = rbpf.run_trial(grid, cfg, PARAMS, seed=7).as_array()
    c = rbpf.run_trial(grid, cfg, PARAMS, seed=8).as_array()
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_fov_clamps_every_particle():
    state = rbpf.init(rbpf.FilterConfig(n_particles=300), PARAMS, 0)
    state = rbpf.step(state, (TickObservation(True), TickObservation(), TickObservation()), PARAMS)
    assert np.all(state.perception[:, 0] == 1)
    state = rbpf.step(state, (TickObservation(), TickObservation(), TickObservation(True)), PARAMS)
    assert np.all(state.perception[:, 2] == 1)
    assert state.tick == 1


def test_sufficient_statistics_stay_consistent():
    grid, _ = simulate_trial(MIXED, 80, 0.3, seed=2)
    state = rbpf.init(rbpf.FilterConfig(n_particles=200), MIXED, 3)
    for t in range(grid.n_ticks):
        state = rbpf.step(state, grid.tick(t), MIXED)
    assert state.counts.sum() == 200 * grid.total_placements
    assert np.allclose(state.loglik, placement_loglik(state.counts, MIXED), atol=1e-9)
    assert np.allclose(state.legend_post, rbpf.legend_posterior(state.loglik, MIXED), atol=1e-12)
    assert state.weights.sum() == pytest.approx(1.0)
    assert 1.0 <= state.ess <= 200 + 1e-9


def test_single_particle():
    grid, _ = simulate_trial(PARAMS, 50, 0.2, seed=3)
    traj = rbpf.run_trial(grid, rbpf.FilterConfig(n_particles=1), PARAMS, seed=0)
    assert len(traj) == grid.n_ticks
    assert traj.final.p_assignment.sum() == pytest.approx(1.0)


def test_rejects_bad_input():
    state = rbpf.init(rbpf.FilterConfig(n_particles=10), PARAMS, 0)
    with pytest.raises(ValueError):
        rbpf.step(state, (TickObservation(),) * 2, PARAMS)
    with pytest.raises(ValueError):
        rbpf.step(state, (TickObservation(False, (1,)),) + (TickObservation(),) * 2, PARAMS)


def test_zero_placements_uniform():
    grid, _ = simulate_trial(PARAMS, 100, 0.0, seed=4)
    traj = rbpf.run_trial(grid, rbpf.FilterConfig(n_particles=100), PARAMS, seed=0)
    assert np.abs(traj.p_assignment - 1 / 3).max() < 1e-12


def test_exact_on_micro_instance():
    # with many particles the filter approaches the enumerated posterior
    grid = ObservationGrid([[0, 0, 1], [1, 0, 0], [0, 0, 0], [0, 1, 0]],
                           [[(), (), ()], [(1,), (), ()], [(), (2, 1), ()], [(2,), (), (2,)]])
    pa, _, _ = enumerate_marginals(grid, MIXED)
    got = rbpf.run_trial(grid, rbpf.FilterConfig(n_particles=20000), MIXED, seed=1).final.p_assignment
    assert tv(got, pa) < 0.01


def test_matches_oracle_and_converges():
    grid, _ = simulate_trial(MIXED, 200, 0.05, seed=6)
    exact = exact_posterior(grid, MIXED).final.p_assignment
    err = {}
    for n in (100, 3000):
        err[n] = np.mean([tv(rbpf.run_trial(grid, rbpf.FilterConfig(n_particles=n), MIXED, s)
                             .final.p_assignment, exact) for s in range(6)])
    assert err[3000] < 0.05
    assert err[3000] < err[100]


def test_perceived_marginal_matches_oracle():
    grid, _ = simulate_trial(MIXED, 60, 0.1, seed=9)
    exact = exact_posterior(grid, MIXED)
    approx = rbpf.run_trial(grid, rbpf.FilterConfig(n_particles=5000), MIXED, seed=2)
    for t in (10, 30, 60):
        assert np.allclose(approx[t].p_perceived, exact[t].p_perceived, atol=0.05)


def test_lower_variance_than_plain_filter():
    grid, _ = simulate_trial(PARAMS, 200, 0.05, seed=12)
    exact = exact_posterior(grid, PARAMS).final.p_assignment
    n = 300
    rb = [tv(rbpf.run_trial(grid, rbpf.FilterConfig(n_particles=n), PARAMS, s).final.p_assignment, exact)
          for s in range(8)]
    plain = [tv(plain_pf_final(grid, PARAMS, n, s), exact) for s in range(8)]
    assert np.mean(rb) < np.mean(plain)


def test_resampling_is_systematic():
    w = np.array([0.25, 0.25, 0.5, 0.0])
    assert list(rbpf._systematic_indices(w, 0.5)) == [0, 1, 2, 2]
    assert list(rbpf._systematic_indices(np.array([1.0, 0.0, 0.0]), 0.9)) == [0, 0, 0]
