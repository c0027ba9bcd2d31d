"""CSV report writers.

Floats are written with 17 significant digits, enough to round-trip a double,
so identical computations give byte-identical files.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .filtration import atom_values


def fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def to_csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def solution_rows(sol):
    """One row per (step, atom): Y at the atom, Z and reflection on the step after it."""
    sp = sol.input.space
    d = sol.basis.d
    dRp = np.diff(sol.R.plus, axis=0)
    dRm = np.diff(sol.R.minus, axis=0)
    rows = []
    for k in range(sp.N + 1):
        Y = atom_values(sp, sol.Y[k], k)
        if k < sp.N:
            Z = atom_values(sp, sol.Z[k], k)
            p, m = atom_values(sp, dRp[k], k), atom_values(sp, dRm[k], k)
        for a in range(sp.n_atoms[k]):
            ids = ";".join(sp.ids[i] for i in sp.members(k, a))
            if k < sp.N:
                tail = [*Z[:, a], p[a], m[a]]
            else:
                tail = [0.0] * d + [0.0, 0.0]
            rows.append([k, sp.times[k], a, ids, Y[a], *tail])
    return rows


def solution_csv(sol):
    d = sol.basis.d
    header = ["step", "time", "atom", "outcomes", "Y", *[f"Z{i + 1}" for i in range(d)],
              "dRplus", "dRminus"]
    return to_csv(header, solution_rows(sol))


def convergence_csv(report):
    header = ["n", "m", "err_Y", "err_K", "err_A", "mono_n", "mono_m"]
    return to_csv(header, [[r.n, r.m, r.err_Y, r.err_K, r.err_A, r.mono_n, r.mono_m]
                           for r in report.rows])


def checks_csv(results):
    """``results``: list of (name, value, threshold, passed)."""
    return to_csv(["check", "value", "threshold", "pass"], results)


def game_csv(name, values, Y0, space):
    tau = " ".join(f"{i}:{t}" for i, t in zip(space.ids, values.tau))
    sigma = " ".join(f"{i}:{s}" for i, s in zip(space.ids, values.sigma))
    return to_csv(["scenario", "lower_0", "upper_0", "Y_0", "tau", "sigma"],
                  [[name, float(values.lower[0]), float(values.upper[0]), float(Y0), tau, sigma]])


def suite_csv(rows):
    """``rows``: SuiteRow objects (check, instances, worst, passed)."""
    return to_csv(["check", "instances", "worst", "pass"],
                  [[r.check, r.instances, r.worst, r.passed] for r in rows])
