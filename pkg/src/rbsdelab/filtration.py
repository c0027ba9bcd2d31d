"""Finite filtered probability spaces.

A :class:`FilteredSpace` is a finite outcome set with probabilities, a time
grid ``t_0 = 0 < ... < t_N = T`` and a refining sequence of partitions, one per
grid index.  Processes on the space are plain ``numpy`` arrays of shape
``(N + 1, n_outcomes)``; a random variable is an array of shape
``(n_outcomes,)``.  Conditional expectations are exact probability-weighted
atom averages.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

PROB_TOL = 1e-12


class SpaceError(ValueError):
    """Malformed filtered space description."""


class CountExceeded(RuntimeError):
    """Exhaustive stopping-time enumeration would exceed the allowed count."""

    def __init__(self, count, max_count):
        super().__init__(f"{count} stopping times exceed max_count={max_count}")
        self.count = count
        self.max_count = max_count


class FilteredSpace:
    """Finite probability space with a filtration given by refining partitions.

    Parameters
    ----------
    outcomes : sequence of (id, probability)
    times : strictly increasing grid starting at 0
    partitions : ``len(times)`` partitions of the outcome ids; each one refines
        the previous one.

    Atoms at level ``k`` are numbered in the order they appear in
    ``partitions[k]``; the children of an atom are the atoms of level ``k + 1``
    it contains, in their level-``k + 1`` order.
    """

    def __init__(self, outcomes, times, partitions):
        outcomes = [(str(o), p) for o, p in outcomes]
        self.ids = tuple(o for o, _ in outcomes)
        if len(set(self.ids)) != len(self.ids):
            raise SpaceError("duplicate outcome ids")
        self._raw_probs = [p for _, p in outcomes]
        self.probs = np.array([float(p) for p in self._raw_probs])
        if self.probs.size == 0:
            raise SpaceError("empty outcome set")
        if np.any(self.probs <= 0) or np.any(self.probs > 1):
            raise SpaceError("probabilities must lie in (0, 1]")
        if abs(self.probs.sum() - 1.0) > PROB_TOL:
            raise SpaceError(f"probabilities sum to {self.probs.sum()!r}, not 1")

        self.times = np.asarray(times, dtype=float)
        if self.times.ndim != 1 or self.times.size < 1 or self.times[0] != 0:
            raise SpaceError("time grid must start at 0")
        if np.any(np.diff(self.times) <= 0):
            raise SpaceError("time grid must be strictly increasing")
        self.N = self.times.size - 1
        self.dt = np.diff(self.times)

        if len(partitions) != self.N + 1:
            raise SpaceError(f"need {self.N + 1} partitions, got {len(partitions)}")
        index = {o: i for i, o in enumerate(self.ids)}
        n = len(self.ids)
        labels = np.full((self.N + 1, n), -1, dtype=np.int64)
        for k, part in enumerate(partitions):
            for a, atom in enumerate(part):
                if len(atom) == 0:
                    raise SpaceError(f"empty atom at level {k}")
                for o in atom:
                    i = index.get(str(o))
                    if i is None:
                        raise SpaceError(f"unknown outcome {o!r} at level {k}")
                    if labels[k, i] >= 0:
                        raise SpaceError(f"outcome {o!r} in two atoms at level {k}")
                    labels[k, i] = a
            if np.any(labels[k] < 0):
                raise SpaceError(f"partition at level {k} does not cover the outcomes")
        self._partitions = [[[str(o) for o in atom] for atom in part] for part in partitions]
        self.labels = labels
        self.n_atoms = [len(part) for part in partitions]
        self.atom_probs = [
            np.bincount(labels[k], weights=self.probs, minlength=self.n_atoms[k])
            for k in range(self.N + 1)
        ]

        self.children: list[list[list[int]]] = []
        for k in range(self.N):
            kids: list[list[int]] = [[] for _ in range(self.n_atoms[k])]
            parent = np.full(self.n_atoms[k + 1], -1, dtype=np.int64)
            for i in range(n):
                b, a = labels[k + 1, i], labels[k, i]
                if parent[b] < 0:
                    parent[b] = a
                    kids[a].append(int(b))
                elif parent[b] != a:
                    raise SpaceError(f"level {k + 1} does not refine level {k}")
            for a in range(self.n_atoms[k]):
                kids[a].sort()
            self.children.append(kids)
        self._members = [
            [np.flatnonzero(labels[k] == a) for a in range(self.n_atoms[k])]
            for k in range(self.N + 1)
        ]

    @property
    def n(self):
        return len(self.ids)

    @property
    def T(self):
        return float(self.times[-1])

    def members(self, k, atom):
        """Outcome indices of ``atom`` at level ``k``."""
        return self._members[k][atom]

    def atom_of(self, k, outcome):
        """Atom index at level ``k`` containing ``outcome`` (index or id)."""
        i = outcome if isinstance(outcome, (int, np.integer)) else self.ids.index(outcome)
        return int(self.labels[k, i])

    def partition(self, k):
        return [list(atom) for atom in self._partitions[k]]

    def expect(self, x):
        """Unconditional expectation over the last axis."""
        return np.asarray(x, dtype=float) @ self.probs

    def to_dict(self):
        return {
            "outcomes": [[o, p] for o, p in zip(self.ids, self._raw_probs)],
            "times": [t for t in self.times.tolist()],
            "partitions": self.partition_list(),
        }

    def partition_list(self):
        return [self.partition(k) for k in range(self.N + 1)]

    def __repr__(self):
        return f"FilteredSpace(n={self.n}, N={self.N}, atoms={self.n_atoms})"


def cond_expect(space, x, k):
    """E[x | F_k], returned on outcomes (constant on the atoms of level k).

    ``x`` may carry leading axes; the outcome axis is the last one.
    """
    if not 0 <= k <= space.N:
        raise IndexError(f"grid index {k} outside 0..{space.N}")
    x = np.asarray(x, dtype=float)
    lab = space.labels[k]
    px = x * space.probs
    lead = px.shape[:-1]
    flat = px.reshape(-1, space.n)
    sums = np.zeros((flat.shape[0], space.n_atoms[k]))
    np.add.at(sums, (slice(None), lab), flat)
    avg = sums / space.atom_probs[k]
    return avg[:, lab].reshape(lead + (space.n,))


def atom_values(space, x, k):
    """Per-atom values of an F_k-measurable x (first member of each atom)."""
    first = np.array([m[0] for m in space._members[k]])
    return np.asarray(x)[..., first]


def measurability_gap(space, x, k):
    """max over atoms of level k of (max x - min x); 0 iff x is F_k-measurable."""
    x = np.asarray(x, dtype=float)
    lab = space.labels[k]
    hi = np.full(space.n_atoms[k], -np.inf)
    lo = np.full(space.n_atoms[k], np.inf)
    np.maximum.at(hi, lab, x)
    np.minimum.at(lo, lab, x)
    return float(np.max(hi - lo))


def is_adapted(space, X, tol=1e-12):
    X = np.asarray(X, dtype=float)
    return all(measurability_gap(space, X[k], k) <= tol * (1 + np.abs(X[k]).max())
               for k in range(space.N + 1))


def is_predictable(space, X, tol=1e-12):
    X = np.asarray(X, dtype=float)
    if measurability_gap(space, X[0], 0) > tol * (1 + np.abs(X[0]).max()):
        return False
    return all(measurability_gap(space, X[k], k - 1) <= tol * (1 + np.abs(X[k]).max())
               for k in range(1, space.N + 1))


def predictable_projection(space, X):
    """(pX)_k = E[X_k | F_{k-1}] for k >= 1 and (pX)_0 = X_0."""
    X = np.asarray(X, dtype=float)
    out = np.empty_like(X)
    out[0] = X[0]
    for k in range(1, space.N + 1):
        out[k] = cond_expect(space, X[k], k - 1)
    return out


def dual_predictable_projection(space, A):
    """Compensator of a finite-variation process with A_0 = 0.

    Increments are E[dA_k | F_{k-1}], so E A^p_N = E A_N.
    """
    A = np.asarray(A, dtype=float)
    dA = np.diff(A, axis=0)
    out = np.zeros_like(A)
    for k in range(1, space.N + 1):
        out[k] = out[k - 1] + cond_expect(space, dA[k - 1], k - 1)
    return out


@dataclass(frozen=True)
class StoppingTime:
    """Grid index per outcome; ``{tau = k}`` must be a union of level-k atoms."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.int64))

    def is_valid(self, space):
        v = self.values
        if v.shape != (space.n,) or v.min() < 0 or v.max() > space.N:
            return False
        return all(measurability_gap(space, (v == k).astype(float), k) == 0
                   for k in range(space.N + 1))

    @classmethod
    def constant(cls, space, k):
        return cls(np.full(space.n, k))


def count_stopping_times(space, start=0):
    """Number of stopping times with values in {start, ..., N}.

    Uses c(leaf) = 1 and c(node) = 1 + prod c(children) over the tree of atoms.
    """
    counts = [1] * space.n_atoms[space.N]
    for k in range(space.N - 1, start - 1, -1):
        counts = [1 + math.prod(counts[b] for b in space.children[k][a])
                  for a in range(space.n_atoms[k])]
    return math.prod(counts)


def enumerate_stopping_times(space, max_count, start=0):
    """All stopping times with values in {start, ..., N}, as an int array.

    Returns an array of shape ``(count, n_outcomes)``; row order is
    deterministic (stop-now before continue, children in atom order).
    Raises :class:`CountExceeded` if the count is above ``max_count``.
    """
    if not 0 <= start <= space.N:
        raise IndexError(f"start index {start} outside 0..{space.N}")
    count = count_stopping_times(space, start)
    if count > max_count:
        raise CountExceeded(count, max_count)
    n = space.n

    def options(k, a):
        # rows are zero off the atom so disjoint children combine by addition
        stop = np.zeros((1, n), dtype=np.int64)
        stop[0, space.members(k, a)] = k
        if k == space.N:
            return stop
        combo = np.zeros((1, n), dtype=np.int64)
        for b in space.children[k][a]:
            child = options(k + 1, b)
            combo = (combo[:, None, :] + child[None, :, :]).reshape(-1, n)
        return np.concatenate([stop, combo])

    out = np.zeros((1, n), dtype=np.int64)
    for a in range(space.n_atoms[start]):
        opt = options(start, a)
        out = (out[:, None, :] + opt[None, :, :]).reshape(-1, n)
    return out


# ---------------------------------------------------------------- constructors


def tree_space(tree_probs, times=None, prefix="w"):
    """Space from nested branch probabilities.

    ``tree_probs`` is a nested list: a leaf is ``None``; an inner node is a list
    of ``(conditional probability, subtree)`` pairs.  All leaves must sit at the
    same depth N.  Level-0 sigma-field is trivial.
    """
    leaves = []

    def walk(node, path, prob, depth):
        if node is None:
            leaves.append((path, prob, depth))
            return
        for j, (q, sub) in enumerate(node):
            walk(sub, path + (j,), prob * q, depth + 1)

    walk(tree_probs, (), 1.0, 0)
    depths = {d for _, _, d in leaves}
    if len(depths) != 1:
        raise SpaceError("all leaves must have equal depth")
    N = depths.pop()
    ids = [f"{prefix}{i}" for i in range(len(leaves))]
    outcomes = [(i, p) for i, (_, p, _) in zip(ids, leaves)]
    partitions = []
    for k in range(N + 1):
        groups: dict[tuple, list[str]] = {}
        for i, (path, _, _) in zip(ids, leaves):
            groups.setdefault(path[:k], []).append(i)
        partitions.append(list(groups.values()))
    if times is None:
        times = list(range(N + 1))
    return _normalised(outcomes, times, partitions)


def _normalised(outcomes, times, partitions):
    probs = np.array([p for _, p in outcomes], dtype=float)
    probs = probs / probs.sum()
    return FilteredSpace([(o, float(p)) for (o, _), p in zip(outcomes, probs)], times, partitions)


def binomial_space(N, p=0.5, T=None):
    """Recombination-free binomial tree: 2**N path outcomes, up probability p.

    Outcome ids spell the path, e.g. ``"udu"``; time grid is uniform on [0, T]
    (T defaults to N).
    """
    T = float(N) if T is None else T
    paths = ["".join(s) for s in itertools.product("ud", repeat=N)] if N else [""]
    ids = [s if s else "root" for s in paths]
    outcomes = [(i, p ** s.count("u") * (1 - p) ** s.count("d")) for i, s in zip(ids, paths)]
    partitions = []
    for k in range(N + 1):
        groups: dict[str, list[str]] = {}
        for i, s in zip(ids, paths):
            groups.setdefault(s[:k], []).append(i)
        partitions.append(list(groups.values()))
    return _normalised(outcomes, np.linspace(0.0, T, N + 1).tolist(), partitions)


def trinomial_space(N, probs=(1 / 3, 1 / 3, 1 / 3), T=None):
    """Trinomial path tree with branch probabilities ``(up, mid, down)``."""
    T = float(N) if T is None else T
    paths = ["".join(s) for s in itertools.product("umd", repeat=N)] if N else [""]
    ids = [s if s else "root" for s in paths]
    pr = dict(zip("umd", probs))
    outcomes = [(i, math.prod(pr[c] for c in s)) for i, s in zip(ids, paths)]
    partitions = []
    for k in range(N + 1):
        groups: dict[str, list[str]] = {}
        for i, s in zip(ids, paths):
            groups.setdefault(s[:k], []).append(i)
        partitions.append(list(groups.values()))
    return _normalised(outcomes, np.linspace(0.0, T, N + 1).tolist(), partitions)


def counterexample_space():
    """Two equally likely outcomes, information revealed at t = 1, T = 2.

    F_0 is trivial; from grid index 1 on, the outcome is known.
    """
    return FilteredSpace(
        [("w1", 0.5), ("w2", 0.5)],
        [0.0, 1.0, 2.0],
        [[["w1", "w2"]], [["w1"], ["w2"]], [["w1"], ["w2"]]],
    )


def random_tree(rng, depth, max_branch, min_branch=1, times=None):
    """Random tree space: each atom splits into min_branch..max_branch children.

    Branch probabilities are Dirichlet(1, ..., 1), floored away from 0.
    """
    rng = np.random.default_rng(rng)

    def grow(d):
        if d == depth:
            return None
        m = int(rng.integers(min_branch, max_branch + 1))
        q = rng.dirichlet(np.ones(m)) + 0.05
        q = q / q.sum()
        return [(float(qi), grow(d + 1)) for qi in q]

    return tree_space(grow(0), times=times)


# ------------------------------------------------------------------------- io


def save_space(space, path):
    """Write the JSON space description (round-trips bit-exactly)."""
    Path(path).write_text(json.dumps(space.to_dict(), indent=1))


def load_space(path):
    return space_from_dict(json.loads(Path(path).read_text()))


def space_from_dict(d):
    try:
        return FilteredSpace([tuple(o) for o in d["outcomes"]], d["times"], d["partitions"])
    except KeyError as exc:
        raise SpaceError(f"space description lacks key {exc.args[0]!r}") from None


def as_outcome_array(space, x):
    """Coerce a scalar, list in outcome order or ``{id: value}`` mapping."""
    if isinstance(x, dict):
        missing = set(space.ids) - set(map(str, x))
        if missing:
            raise SpaceError(f"missing outcomes {sorted(missing)}")
        return np.array([float(x[i]) for i in space.ids])
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        return np.full(space.n, float(arr))
    if arr.shape != (space.n,):
        raise SpaceError(f"expected {space.n} outcome values, got shape {arr.shape}")
    return arr


def as_process(space, X):
    """Coerce a scalar, (N+1, n) nested list or step-major list of mappings."""
    if isinstance(X, (int, float)):
        return np.full((space.N + 1, space.n), float(X))
    if isinstance(X, Sequence) and not isinstance(X, str) and len(X) == space.N + 1:
        return np.stack([as_outcome_array(space, row) for row in X])
    arr = np.asarray(X, dtype=float)
    if arr.shape != (space.N + 1, space.n):
        raise SpaceError(f"expected process of shape {(space.N + 1, space.n)}, got {arr.shape}")
    return arr
