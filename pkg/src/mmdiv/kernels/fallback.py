"""Pure-numpy implementation of the hot bundle kernels.

Used when the compiled extension is unavailable.  Semantics are identical to
``mmdiv.kernels._core``: both evaluate, for every grid node x, the per-path
one-epoch value and right-derivative contributions from the compressed
running-minimum records, summed over paths in path order.
"""

from __future__ import annotations

import numpy as np

__all__ = ["value_terms", "deriv_terms"]


def _interp_row(z, x_nodes, row, slope_hi):
    x_max = x_nodes[-1]
    base = np.interp(z, x_nodes, row)
    return base + slope_hi * np.clip(z - x_max, 0.0, None)


def value_terms(offsets, rec_m, rec_disc, xi_end, disc_end, y_end,
                x_nodes, F, slope_hi, beta):
    """Sum over paths of -beta * injection(x) + disc_T * F[y_T](endpoint(x)).

    F rows are evaluated by linear interpolation on x_nodes with per-state
    linear extension of slope slope_hi above the last node.
    """
    n_nodes = x_nodes.size
    out = np.zeros(n_nodes)
    n_paths = offsets.size - 1
    for p in range(n_paths):
        o0, o1 = offsets[p], offsets[p + 1]
        m = rec_m[o0:o1]
        disc = rec_disc[o0:o1]
        J = m.size - 1
        y = y_end[p]
        if J >= 1:
            diffs = disc[1:] * (m[:-1] - m[1:])
            suffix = np.zeros(J + 2)
            suffix[1:J + 1] = np.cumsum(diffs[::-1])[::-1]
            k = np.searchsorted(-m, x_nodes, side="right")
            has = k <= J
            kc = np.minimum(k, J)
            inj = np.where(has, disc[kc] * (-x_nodes - m[kc]) + suffix[kc + 1], 0.0)
        else:
            inj = np.zeros(n_nodes)
        endpoint = x_nodes + xi_end[p] + np.clip(-x_nodes - m[J], 0.0, None)
        out += -beta * inj + disc_end[p] * _interp_row(
            endpoint, x_nodes, F[y], slope_hi[y])
    return out


def deriv_terms(offsets, rec_m, rec_disc, xi_end, disc_end, y_end,
                x_nodes, D, beta):
    """Sum over paths of the one-epoch right-derivative contributions.

    Per path: beta * exp(-frq) at the first record strictly below -x when the
    path ruins, else disc_T * D[y_T](x + xi_T).  D rows are clamped flat
    beyond the last node.
    """
    n_nodes = x_nodes.size
    out = np.zeros(n_nodes)
    n_paths = offsets.size - 1
    for p in range(n_paths):
        o0, o1 = offsets[p], offsets[p + 1]
        m = rec_m[o0:o1]
        disc = rec_disc[o0:o1]
        J = m.size - 1
        y = y_end[p]
        surv = disc_end[p] * np.interp(x_nodes + xi_end[p], x_nodes, D[y])
        if J >= 1:
            k = np.searchsorted(-m, x_nodes, side="right")
            has = k <= J
            kc = np.minimum(k, J)
            out += np.where(has, beta * disc[kc], surv)
        else:
            out += surv
    return out
