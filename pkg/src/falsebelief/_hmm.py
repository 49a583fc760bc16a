"""Forward-filter backward-sample kernel for the two-state perception chain.

Conventions shared with the rest of the package: ``n_markers[c, t, m]``
counts marker ``m + 1`` placements at tick ``t``, emitted given the chain's
state at tick ``t - 1`` with Marker1 probability ``theta[c, state]``;
``fov[c, t]`` clamps the state at tick ``t`` to Perceived.
"""

import numba as nb
import numpy as np


@nb.njit(cache=True, nogil=True)
def _log_emit(n1, n2, th):
    if n1 == 0 and n2 == 0:
        return 0.0
    out = 0.0
    if n1 > 0:
        out += n1 * np.log(th)
    if n2 > 0:
        out += n2 * np.log1p(-th)
    return out


@nb.njit(cache=True, nogil=True)
def ffbs_batch(n_markers, theta, fov, lengths, trans, prior, u, out):
    """Draw one exact posterior path per chain into ``out``.

    ``u`` holds one uniform per (chain, tick); chain ``c`` consumes only
    ``u[c, :lengths[c]]`` so batching never changes an individual draw.
    """
    n_chains = fov.shape[0]
    max_len = fov.shape[1]
    alpha = np.empty((max_len, 2))
    for c in range(n_chains):
        n = lengths[c]
        th0 = theta[c, 0]
        th1 = theta[c, 1]
        a0 = prior[0]
        a1 = prior[1]
        if fov[c, 0]:
            a0 = 0.0
        s = a0 + a1
        alpha[0, 0] = a0 / s
        alpha[0, 1] = a1 / s
        for t in range(1, n):
            b0 = alpha[t - 1, 0]
            b1 = alpha[t - 1, 1]
            k1 = n_markers[c, t, 0]
            k2 = n_markers[c, t, 1]
            if k1 > 0 or k2 > 0:
                e0 = _log_emit(k1, k2, th0)
                e1 = _log_emit(k1, k2, th1)
                m = max(e0, e1)
                b0 *= np.exp(e0 - m)
                b1 *= np.exp(e1 - m)
            a0 = b0 * trans[0, 0] + b1 * trans[1, 0]
            a1 = b0 * trans[0, 1] + b1 * trans[1, 1]
            if fov[c, t]:
                a0 = 0.0
            s = a0 + a1
            alpha[t, 0] = a0 / s
            alpha[t, 1] = a1 / s

        state = 1 if u[c, n - 1] < alpha[n - 1, 1] else 0
        out[c, n - 1] = state
        for t in range(n - 2, -1, -1):
            w0 = alpha[t, 0] * trans[0, state]
            w1 = alpha[t, 1] * trans[1, state]
            k1 = n_markers[c, t + 1, 0]
            k2 = n_markers[c, t + 1, 1]
            if k1 > 0 or k2 > 0:
                e0 = _log_emit(k1, k2, th0)
                e1 = _log_emit(k1, k2, th1)
                m = max(e0, e1)
                w0 *= np.exp(e0 - m)
                w1 *= np.exp(e1 - m)
            state = 1 if u[c, t] * (w0 + w1) < w1 else 0
            out[c, t] = state
        for t in range(n, max_len):
            out[c, t] = 0
    return out


def sample_paths(n_markers, theta, fov, lengths, trans, prior, rng):
    """Vectorised entry point: allocate uniforms and output, run the kernel.

    ``theta`` has shape ``(chains, 2)``: Marker1 probability given the
    previous state of each chain.
    """
    fov = np.ascontiguousarray(fov, dtype=np.bool_)
    u = rng.random(fov.shape)
    out = np.zeros(fov.shape, dtype=np.int8)
    ffbs_batch(np.ascontiguousarray(n_markers, dtype=np.int64),
               np.ascontiguousarray(theta, dtype=np.float64), fov,
               np.ascontiguousarray(lengths, dtype=np.int64),
               np.ascontiguousarray(trans, dtype=np.float64),
               np.ascontiguousarray(prior, dtype=np.float64), u, out)
    return out
