"""Independent brute-force oracles shared by the unit tests."""

import itertools

import numpy as np

from rbsdelab.filtration import random_tree


def small_tree(seed, depth=None, max_branch=3):
    rng = np.random.default_rng(seed)
    depth = int(rng.integers(1, 4)) if depth is None else depth
    return random_tree(rng, depth, max_branch)


def partitions_of(space):
    """Level-k atoms as lists of outcome indices, read from the serialised form."""
    d = space.to_dict()
    pos = {o: i for i, o in enumerate(space.ids)}
    return [[[pos[o] for o in atom] for atom in level] for level in d["partitions"]]


def naive_cond_expect(space, x, k):
    out = np.empty(space.n)
    for atom in partitions_of(space)[k]:
        w = space.probs[atom]
        out[atom] = sum(w[j] * x[i] for j, i in enumerate(atom)) / w.sum()
    return out


def naive_stopping_times(space, start=0):
    """Every map outcome -> {start..N} whose level sets {tau = k} are unions of level-k atoms."""
    parts = partitions_of(space)
    found = []
    for cand in itertools.product(range(start, space.N + 1), repeat=space.n):
        cand = np.array(cand)
        if all(len({bool(cand[i] == k) for i in atom}) == 1
               for k in range(space.N + 1) for atom in parts[k]):
            found.append(cand)
    return np.array(found)


def single_path(values, times=None):
    """One-outcome space carrying a deterministic path of len(values) grid points."""
    from rbsdelab.filtration import FilteredSpace
    N = len(values) - 1
    times = list(range(N + 1)) if times is None else times
    return FilteredSpace([("w", 1.0)], times, [[["w"]]] * (N + 1))
