"""Empirical constants for the a priori estimates.

The estimates hold with constants that are not given explicitly, so a seeded
sweep records the largest observed ratio per check and multiplies it by a
safety factor.  The result is committed as ``data/constants.json`` and the
test suite asserts, on a different seed, that no ratio exceeds it.

Regenerate with ``python -m rbsdelab.calibration`` (deterministic).
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import numpy as np

from .analysis import lp_estimate, supermartingale_energy_ratio
from .generators import cubic, linear_y, z_linear
from .instances import (random_adapted, random_fv, random_space, random_supermartingale,
                        random_terminal, rngs)
from .martrep import build_basis
from .rbsde import RBSDEInput, solve_reflected, zero_generator

P_VALUES = (1.25, 1.5, 2.0)
CALIBRATION_SEED = 20240611
CALIBRATION_COUNT = 2000
SAFETY = 2.0
KINDS = ("zero", "linear", "cubic", "z_linear")


def lp_instance(rng, kind=None):
    """Problem satisfying the growth hypothesis, with L <= 0 <= U.

    Returns ``(solution, f_bound, mu, lam)`` where ``f_bound`` is the process
    in ``sgn(y) f(t, y, z) <= f_t + mu |y| + lam ||z||_M``.
    """
    kind = kind or KINDS[int(rng.integers(len(KINDS)))]
    sp = random_space(rng, max_depth=4, max_branch=3)
    basis = build_basis(sp)
    b = random_adapted(sp, rng, 0.5)
    mu = lam = 0.0
    if kind == "zero":
        f, b = zero_generator(), np.zeros_like(b)
    elif kind == "linear":
        a = float(rng.uniform(-1.0, 0.5))
        f, mu = linear_y(sp, a, b), max(a, 0.0)
    elif kind == "cubic":
        f = cubic(sp, float(rng.uniform(0.0, 1.0)), b)
    else:
        a = float(rng.uniform(-0.5, 0.3))
        lam = float(rng.uniform(0.1, 0.3))
        f = z_linear(sp, basis, a, lam, rng.standard_normal(max(basis.d, 1)), b)
        mu = max(a, 0.0)
    xi = random_terminal(sp, rng)
    V = random_fv(sp, rng, 0.3)
    L = -np.abs(random_adapted(sp, rng, 0.7)) if rng.random() < 0.8 else None
    U = np.abs(random_adapted(sp, rng, 0.7)) if rng.random() < 0.5 else None
    sol = solve_reflected(RBSDEInput(sp, xi, f, V, L, U), basis)
    return sol, np.abs(b), mu, lam


def lp_reports(seed, count, p_values=P_VALUES, alpha_shift=0.0):
    """EstimateReports for ``count`` instances and every p (dict p -> list)."""
    out = {p: [] for p in p_values}
    for rng in rngs(seed, count):
        sol, fb, mu, lam = lp_instance(rng)
        alpha = (mu + lam ** 2 if sol.input.f.depends_on_z else mu) + alpha_shift
        for p in p_values:
            out[p].append(lp_estimate(sol, p, alpha, fb, mu, lam))
    return out


def energy_ratios(seed, count):
    out = []
    for rng in rngs(seed, count):
        sp = random_space(rng, max_depth=4, max_branch=3)
        out.append(supermartingale_energy_ratio(sp, random_supermartingale(sp, rng)))
    return out


def calibrate(seed=CALIBRATION_SEED, count=CALIBRATION_COUNT, safety=SAFETY):
    reps = lp_reports(seed, count)
    energy = energy_ratios(seed, count)
    observed = {
        "energy": max(energy),
        **{f"lp_{p:g}": max(r.ratio for r in reps[p]) for p in P_VALUES},
        **{f"generator_{p:g}": max(r.generator_ratio for r in reps[p]) for p in P_VALUES},
    }
    return {
        "seed": seed,
        "instances": count,
        "safety": safety,
        "observed": observed,
        "constants": {k: v * safety for k, v in observed.items()},
    }


def load_constants(path=None):
    if path is None:
        text = resources.files("rbsdelab").joinpath("data/constants.json").read_text()
    else:
        text = Path(path).read_text()
    return json.loads(text)["constants"]


def main():
    target = Path(__file__).with_name("data") / "constants.json"
    target.write_text(json.dumps(calibrate(), indent=2, sort_keys=True) + "\n")
    print(f"wrote {target}")


if __name__ == "__main__":
    main()
