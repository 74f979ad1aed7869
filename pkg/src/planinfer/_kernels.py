"""Compiled inner loop for the collapsed plan likelihood."""

import math

import numba
import numpy as np


@numba.njit(cache=True)
def collapsed_loglik(key, ids, mask, members, n_groups, eps, w_p, e_beta_m1):
    """Sum over utterances of log p(utterance | plan), assignments summed out.

    ``key`` gives each predicate's step rank (0 = absent). ``ids``/``mask``
    list each utterance's observed predicate ids; ``members[t, r]`` indexes
    the observations of rank group r (padded with ``ids.shape[1]``). The
    per-utterance order normalizer is not included.
    """
    k = 0
    for x in key:
        if x > k:
            k = x
    if k == 0:
        return -np.inf
    sizes = np.zeros(k)
    for x in key:
        if x:
            sizes[x - 1] += 1.0
    placed = sizes.sum()
    hit = w_p / placed
    base = sizes * (eps / placed)
    n_utt, n_obs = ids.shape
    acc = np.empty(k)
    grp = np.empty(k)
    total = 0.0
    for t in range(n_utt):
        free = 1.0
        for o in range(n_obs):
            if mask[t, o]:
                free *= eps + hit if key[ids[t, o]] > 0 else eps
        for r in range(n_groups[t]):
            grp[:] = 1.0
            for m in range(members.shape[2]):
                o = members[t, r, m]
                if o >= n_obs:
                    break
                s = key[ids[t, o]] - 1
                for j in range(k):
                    grp[j] *= base[j] + hit if j == s else base[j]
            if r == 0:
                acc[:] = grp
            else:
                below = 0.0
                for j in range(k):
                    a = acc[j]
                    acc[j] = grp[j] * below
                    below += a
        mass = free + e_beta_m1 * acc.sum()
        if mass <= 0.0:
            return -np.inf
        total += math.log(mass)
    return total
