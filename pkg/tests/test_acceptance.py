"""The eleven acceptance criteria, each printed as one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the summary lines.
"""

import time

import numpy as np
import pytest

from rbsdelab import reports, suites
from rbsdelab.filtration import counterexample_space
from rbsdelab.rbsde import RBSDEInput, solve_reflected, zero_generator

pytestmark = pytest.mark.acceptance


@pytest.fixture(scope="module")
def battery():
    rows = suites.run_suite("all")
    return {r.check: r for r in rows}


def verdict(number, title, rows, extra=True):
    ok = all(r.passed for r in rows) and bool(extra)
    worst = ", ".join(f"{r.check}={reports.fmt(r.worst)}" for r in rows)
    print(f"\n[criterion {number:2d}] {'PASS' if ok else 'FAIL'} {title}: {worst}")
    return ok


def pick(battery, *prefixes):
    rows = [r for name, r in battery.items() if name.startswith(prefixes)]
    assert rows, prefixes
    return rows


def test_criterion_01_counterexample(battery):
    sp = counterexample_space()
    L = np.array([[2.0, 2.0], [0.0, 0.0], [0.0, 0.0]])
    inp = RBSDEInput(sp, np.array([5.0, 1.0]), zero_generator(), None, L, None)
    solve_reflected(inp)  # warm-up
    t0 = time.perf_counter()
    for _ in range(20):
        solve_reflected(inp)
    per_solve = (time.perf_counter() - t0) / 20
    rows = pick(battery, "counterexample", "identity_2B", "identity_20B")
    assert verdict(1, f"counterexample exactness ({per_solve * 1e3:.3f} ms/solve)", rows,
                   per_solve < 1e-3)


def test_criterion_02_snell_oracle(battery):
    assert verdict(2, "snell envelope equals oracle", pick(battery, "snell_vs_oracle"))


def test_criterion_03_penalization():
    t0 = time.perf_counter()
    rows = suites.run_suite("penalization")
    elapsed = time.perf_counter() - t0
    assert verdict(3, f"penalization convergence ({elapsed:.1f} s)", rows, elapsed < 30)


def test_criterion_04_dynkin(battery):
    assert verdict(4, "Dynkin game values", pick(battery, "dynkin_value"))


def test_criterion_05_comparison(battery):
    rows = [r for r in pick(battery, "comparison_") if not r.check.endswith("_invariants")]
    assert len(rows) == 3
    assert verdict(5, "comparison suites", rows)


def test_criterion_06_invariants(battery):
    rows = [r for name, r in battery.items()
            if name.startswith("invariant_") or name.endswith("_invariants")]
    assert verdict(6, "solution invariants", rows)


def test_criterion_07_martingale_representation(battery):
    assert verdict(7, "martingale representation", pick(battery, "martrep_"))


def test_criterion_08_picard(battery):
    assert verdict(8, "Picard against direct scheme", pick(battery, "picard_"))


def test_criterion_09_inequalities(battery):
    rows = pick(battery, "power_convexity", "power_ito", "jump_formula", "reflection_upper")
    assert verdict(9, "inequality suites", rows)


def test_criterion_10_constants(battery):
    assert verdict(10, "empirical constants", pick(battery, "lp_ratio", "generator_ratio",
                                                      "energy_ratio"))


def test_criterion_11_determinism(battery):
    first = reports.suite_csv(battery.values())
    second = reports.suite_csv(suites.run_suite("all"))
    row = suites.SuiteRow("byte_identical_rerun", len(battery), 0.0 if first == second else 1.0,
                          first == second)
    assert verdict(11, "determinism", [row])
