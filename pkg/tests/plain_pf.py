"""Bootstrap particle filter that samples legends too (no Rao-Blackwellisation)."""

import numpy as np

from falsebelief.model import ASSIGNMENT_TABLE


def plain_pf_final(grid, params, n, seed):
    rng = np.random.default_rng(seed)
    o = (rng.random((n, 3)) < params.mu_O).astype(int)
    team = (rng.random(n) < params.mu_T).astype(int)
    p = (rng.random((n, 3)) < params.mu_P).astype(int)
    p[:, grid.fov[0]] = 1
    logw = np.zeros(n)
    theta = params.theta_table
    trans = params.transition_matrix
    for t in range(1, grid.n_ticks):
        for i in range(3):
            for m in grid.placements[t][i]:
                p1 = theta[p[:, i], o[:, i], team]
                logw += np.log(p1 if m == 1 else 1.0 - p1)
        moved = np.where(rng.random((n, 3)) < params.p_stay, p, 1 - p)
        for i in np.nonzero(grid.fov[t])[0]:
            logw += np.log(trans[p[:, i], 1])
            moved[:, i] = 1
        p = moved
        w = np.exp(logw - logw.max())
        w /= w.sum()
        if 1.0 / np.sum(w * w) < 0.5 * n:
            idx = rng.choice(n, n, p=w)
            o, team, p = o[idx], team[idx], p[idx]
            logw = np.zeros(n)
    w = np.exp(logw - logw.max())
    w /= w.sum()
    return w @ ASSIGNMENT_TABLE[o @ np.array([4, 2, 1])]
