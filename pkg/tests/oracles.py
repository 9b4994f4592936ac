"""Independent reference computations shared by the tests."""
import math

import numpy as np


def sector_index(vu_x, bs_x, w, n_c):
    """Beam index from the pointing angle: sectors of width 2*pi/N_c centred on broadside."""
    theta = np.arctan2(np.asarray(vu_x, dtype=float) - bs_x, w)
    width = 2.0 * math.pi / n_c
    return np.floor((theta + width / 2.0) / width).astype(int)


def ray_trace_neighbor_switches(d, w, n_c):
    """Switches between two same-side BSs d apart, counted from beam angles.

    The VU leaves BS 1 at its position, hands over at d/2 and reaches BS 2.
    """
    first = sector_index(d / 2.0, 0.0, w, n_c) - sector_index(0.0, 0.0, w, n_c)
    second = sector_index(d, d, w, n_c) - sector_index(d / 2.0, d, w, n_c)
    return int(first + second)


def walk_pmf(n_b, p_tb):
    """Exact distribution of served bottom BSs by enumerating the handover walk."""
    p_tt, p_bt, p_bb = 1.0 - p_tb, 1.0 - p_tb, p_tb
    # state: (on_bottom, finished, served) -> probability
    dist = {(False, False, 0): 1.0}
    for _ in range(n_b):
        nxt = {}
        for (on_b, done, s), pr in dist.items():
            moves = [((on_b, done, s), 1.0)] if done else (
                [((True, False, s + 1), p_bb), ((False, True, s), p_bt)] if on_b
                else [((True, False, s + 1), p_tb), ((False, False, s), p_tt)])
            for key, q in moves:
                nxt[key] = nxt.get(key, 0.0) + pr * q
        dist = nxt
    out = np.zeros(n_b + 1)
    for (_, _, s), pr in dist.items():
        out[s] += pr
    return out
