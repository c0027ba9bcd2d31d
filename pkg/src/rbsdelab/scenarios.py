"""Scenario configs: parse, run, and report.

A scenario is a JSON object::

    {
      "name": "american_put_binomial",
      "space": {"constructor": "binomial", "N": 4, "p": 0.5, "T": 1.0},
      "data": {"constructor": "american_put", "S0": 100, "u": 1.1, "d": 0.9,
               "strike": 100},
      "generator": {"name": "linear_y", "params": {"a": -0.05}},
      "solver": {"method": "projection"},
      "checks": ["invariants", "jump_formula"],
      "sweep": {"base": 2, "j_min": 0, "j_max": 12},
      "output": "reports/american_put"
    }

``space`` is ``{"inline": {...}}``, ``{"path": "space.json"}`` or a
constructor (``binomial``, ``trinomial``, ``counterexample``, ``random_tree``).
``data`` is either explicit ``xi``/``V``/``L``/``U`` entries (anything
:func:`~rbsdelab.filtration.as_process` accepts) or a constructor
(``counterexample``, ``american_put``, ``random``).  ``solver.method`` is
``projection``, ``penalization`` (with ``n``, ``m``) or ``picard`` (with
``tol``, ``max_iter``, ``windows``).
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import reports
from .dynkin import GamePayoff, game_value_enum
from .filtration import (CountExceeded, SpaceError, as_outcome_array, as_process, binomial_space,
                         counterexample_space, load_space, random_tree, space_from_dict,
                         trinomial_space)
from .analysis import jump_formula_gap, sandwich_witness
from .generators import REGISTRY as GENERATORS, make_generator
from .instances import random_problem
from .martrep import build_basis
from .rbsde import (RBSDEInput, Solution, check_solution, penalization_sweep, solve_penalized,
                    solve_picard, solve_reflected)
from .processes import FVDecomposition
from .snell import SnellProblem, pathwise_identity_gap, projection_identity_gap, snell_oracle


class ConfigError(ValueError):
    """Invalid scenario config; the message names the offending key."""


# ------------------------------------------------------------------ registry

_BUILTIN = [
    {
        "name": "counterexample",
        "space": {"constructor": "counterexample"},
        "data": {"constructor": "counterexample"},
        "generator": {"name": "zero"},
        "solver": {"method": "projection"},
        "checks": ["identity_2B", "identity_20B_violation", "invariants", "snell_oracle",
                   "jump_formula"],
        "sweep": {"base": 2, "j_min": 0, "j_max": 16, "upper": False},
    },
    {
        "name": "counterexample_game",
        "space": {"constructor": "counterexample"},
        "data": {"constructor": "counterexample", "upper_offset": 10.0},
        "generator": {"name": "zero"},
        "solver": {"method": "projection"},
        "checks": ["invariants", "dynkin"],
    },
    {
        "name": "american_put_binomial",
        "space": {"constructor": "binomial", "N": 4, "p": 0.5, "T": 1.0},
        "data": {"constructor": "american_put", "S0": 100.0, "u": 1.1, "d": 0.9,
                 "strike": 100.0},
        "generator": {"name": "linear_y", "params": {"a": -0.05}},
        "solver": {"method": "projection"},
        "checks": ["invariants", "snell_oracle", "jump_formula"],
        "sweep": {"base": 2, "j_min": 0, "j_max": 12, "upper": False},
    },
    {
        "name": "deterministic_obstacle",
        "space": {"inline": {"outcomes": [["w", 1.0]], "times": [0, 1, 2, 3, 4],
                             "partitions": [[["w"]]] * 5}},
        "data": {"xi": 0.5, "L": [1.0, 2.0, 0.5, 1.5, 0.0],
                 "V": [0.0, 0.25, 0.5, 0.75, 1.0]},
        "generator": {"name": "zero"},
        "solver": {"method": "projection"},
        "checks": ["identity_2B", "identity_20B", "invariants", "snell_oracle"],
    },
    {
        "name": "two_barrier_random",
        "space": {"constructor": "random_tree", "seed": 10, "depth": 3, "max_branch": 3},
        "data": {"constructor": "random", "seed": 12, "barriers": "two"},
        "generator": {"name": "cubic", "params": {"c": 0.3}},
        "solver": {"method": "projection"},
        "checks": ["invariants", "dynkin"],
        "sweep": {"base": 2, "j_min": 4, "j_max": 12},
    },
    {
        "name": "trinomial_penalized",
        "space": {"constructor": "trinomial", "N": 4, "probs": [0.25, 0.5, 0.25]},
        "data": {"constructor": "random", "seed": 5, "barriers": "two", "scale": 0.5},
        "generator": {"name": "linear_y", "params": {"a": -0.2}},
        "solver": {"method": "penalization", "n": 4096, "m": 4096},
        "checks": [],
    },
    {
        "name": "z_linear_picard",
        "space": {"constructor": "binomial", "N": 8, "p": 0.4, "T": 1.0},
        "data": {"constructor": "random", "seed": 3, "barriers": "two"},
        "generator": {"name": "z_linear", "params": {"a": -0.3, "lam": 0.8}},
        "solver": {"method": "picard", "tol": 1e-13, "max_iter": 50, "windows": 2},
        "checks": ["invariants", "direct_agreement"],
    },
    {
        "name": "sandwich_existence",
        "space": {"constructor": "random_tree", "seed": 21, "depth": 4, "max_branch": 2},
        "data": {"constructor": "random", "seed": 22, "barriers": "two", "scale": 3.0},
        "generator": {"name": "cubic", "params": {"c": 2.0}},
        "solver": {"method": "projection"},
        "checks": ["invariants", "sandwich"],
    },
]

_REGISTRY: dict[str, dict] = {}


def register_scenario(config):
    name = config.get("name")
    if not isinstance(name, str) or not name:
        raise ConfigError("name: scenario needs a nonempty string name")
    if name in _REGISTRY:
        raise ConfigError(f"name: scenario {name!r} already registered")
    _REGISTRY[name] = copy.deepcopy(config)


def list_scenarios():
    return sorted(_REGISTRY)


def get_scenario(name):
    try:
        return copy.deepcopy(_REGISTRY[name])
    except KeyError:
        raise ConfigError(f"name: unknown scenario {name!r}") from None


for _c in _BUILTIN:
    register_scenario(_c)


def load_config(source):
    """A registered scenario name, a path to a JSON file, or a dict."""
    if isinstance(source, dict):
        return copy.deepcopy(source)
    if str(source) in _REGISTRY:
        return get_scenario(str(source))
    path = Path(source)
    if not path.exists():
        raise ConfigError(f"config: no scenario or file named {source!r}")
    try:
        cfg = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"config: {path} is not valid JSON ({e})") from None
    if isinstance(cfg.get("space"), dict) and "path" in cfg["space"]:
        p = Path(cfg["space"]["path"])
        if not p.is_absolute():
            cfg["space"]["path"] = str(path.parent / p)
    return cfg


# ------------------------------------------------------------------ building


def _need(d, key, where):
    if key not in d:
        raise ConfigError(f"{where}.{key}: missing")
    return d[key]


def build_space(desc):
    if not isinstance(desc, dict):
        raise ConfigError("space: expected an object")
    try:
        if "inline" in desc:
            return space_from_dict(desc["inline"])
        if "path" in desc:
            return load_space(desc["path"])
        kind = _need(desc, "constructor", "space")
        if kind == "binomial":
            return binomial_space(int(_need(desc, "N", "space")), float(desc.get("p", 0.5)),
                                  desc.get("T"))
        if kind == "trinomial":
            probs = desc.get("probs", [1 / 3, 1 / 3, 1 / 3])
            return trinomial_space(int(_need(desc, "N", "space")), probs, desc.get("T"))
        if kind == "counterexample":
            return counterexample_space()
        if kind == "random_tree":
            depth = int(_need(desc, "depth", "space"))
            times = desc.get("times")
            return random_tree(np.random.default_rng(int(desc.get("seed", 0))), depth,
                               int(desc.get("max_branch", 3)), int(desc.get("min_branch", 1)),
                               times)
    except (SpaceError, OSError, TypeError) as e:
        raise ConfigError(f"space: {e}") from None
    raise ConfigError(f"space.constructor: unknown constructor {desc['constructor']!r}")


def build_generator(desc, space, basis):
    desc = desc or {"name": "zero"}
    name = desc.get("name", "zero")
    if name not in GENERATORS:
        raise ConfigError(f"generator.name: unknown generator {name!r}; "
                          f"known: {sorted(GENERATORS)}")
    params = dict(desc.get("params", {}))
    try:
        return make_generator(name, params, space, basis)
    except TypeError as e:
        raise ConfigError(f"generator.params: {e}") from None


def _american_put(space, d):
    """Put payoff on a binomial path tree; stock moves by u or d per step."""
    S0 = float(d.get("S0", 100.0))
    u, dn = float(_need(d, "u", "data")), float(_need(d, "d", "data"))
    K = float(_need(d, "strike", "data"))
    S = np.empty((space.N + 1, space.n))
    for i, path in enumerate(space.ids):
        path = "" if path == "root" else path
        for k in range(space.N + 1):
            ups = path[:k].count("u")
            S[k, i] = S0 * u ** ups * dn ** (k - ups)
    payoff = np.maximum(K - S, 0.0)
    return payoff[-1], None, payoff, None


def build_input(cfg, space, f):
    data = cfg.get("data")
    if not isinstance(data, dict):
        raise ConfigError("data: expected an object")
    kind = data.get("constructor")
    try:
        if kind is None:
            xi = as_outcome_array(space, _need(data, "xi", "data"))
            V = None if data.get("V") is None else as_process(space, data["V"])
            L = None if data.get("L") is None else as_process(space, data["L"])
            U = None if data.get("U") is None else as_process(space, data["U"])
        elif kind == "counterexample":
            if space.n != 2 or space.N != 2:
                raise ConfigError("data.constructor: counterexample data needs the "
                                  "counterexample space")
            xi = np.array([5.0, 1.0])
            L = np.array([[2.0, 2.0], [0.0, 0.0], [0.0, 0.0]])
            V = None
            off = data.get("upper_offset")
            U = None if off is None else L + float(off)
        elif kind == "american_put":
            xi, V, L, U = _american_put(space, data)
        elif kind == "random":
            rng = np.random.default_rng(int(data.get("seed", 0)))
            inp = random_problem(space, rng, data.get("barriers", "two"), generator=f,
                                 scale=float(data.get("scale", 1.0)))
            return inp
        else:
            raise ConfigError(f"data.constructor: unknown constructor {kind!r}")
        return RBSDEInput(space, xi, f, V, L, U)
    except SpaceError as e:
        raise ConfigError(f"data: {e}") from None


# ------------------------------------------------------------------ running


@dataclass
class RunResult:
    name: str
    solution: object
    checks: list = field(default_factory=list)  # (name, value, threshold, passed)
    files: dict = field(default_factory=dict)  # report name -> text

    @property
    def ok(self):
        return all(c[3] for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c[3]]


def _solve(cfg, inp, basis):
    solver = cfg.get("solver", {"method": "projection"})
    method = solver.get("method", "projection")
    if method == "projection":
        return solve_reflected(inp, basis)
    if method == "penalization":
        pen = solve_penalized(inp, float(solver.get("n", 0.0)), float(solver.get("m", 0.0)),
                              basis)
        # expose the penalized solution in the common Solution shape
        return Solution(inp, basis, pen.Y, pen.Z, pen.M, FVDecomposition(pen.K, pen.A),
                        pen.f_values)
    if method == "picard":
        r = solve_picard(inp, basis, int(solver.get("max_iter", 50)),
                         float(solver.get("tol", 1e-12)), int(solver.get("windows", 1)))
        return r.solution
    raise ConfigError(f"solver.method: unknown method {method!r}")


def _snell_problem(inp):
    if inp.L is None:
        raise ConfigError("checks: Snell checks need a lower barrier L")
    return SnellProblem(inp.space, inp.L, inp.xi, inp.V)


def _check(name, cfg, sol, basis, files):
    inp = sol.input
    sp = inp.space
    if name == "identity_2B":
        prob = _snell_problem(inp)
        v = projection_identity_gap(prob, sol.Y)
        return [(name, v, 1e-12, v <= 1e-12)]
    if name in ("identity_20B", "identity_20B_violation"):
        prob = _snell_problem(inp)
        gaps = pathwise_identity_gap(prob, sol.Y)
        rows = [(f"{name}[{k}:{sp.ids[i]}]", float(gaps.gaps[k, i]), 0.0,
                 True) for k in range(sp.N) for i in range(sp.n) if gaps.gaps[k, i] > 0]
        v = gaps.max
        if name == "identity_20B":
            return [(name, v, 1e-12, v <= 1e-12)] + rows
        return [(name, v, 0.0, v > 0.0)] + rows
    if name == "invariants":
        vals = check_solution(sol)
        return [(f"invariant_{k}", v, 1e-10, v <= 1e-10) for k, v in vals.items()]
    if name == "snell_oracle":
        prob = _snell_problem(inp)
        if inp.U is not None:
            raise ConfigError("checks: snell_oracle applies to one-barrier problems")
        run = np.zeros_like(inp.V)
        run[1:] = np.cumsum(sol.f_values * sp.dt[:, None], axis=0)
        prob = SnellProblem(sp, inp.L, inp.xi, inp.V + run)
        try:
            v = max(float(np.abs(snell_oracle(prob, k).value - sol.Y[k]).max())
                    for k in range(sp.N + 1))
        except CountExceeded as e:
            return [(name, float(e.count), 1e4, False)]
        return [(name, v, 1e-10, v <= 1e-10)]
    if name == "dynkin":
        gp = GamePayoff.from_solution(sol)
        try:
            vals = game_value_enum(gp)
        except CountExceeded as e:
            return [(name, float(e.count), 250_000, False)]
        files["game.csv"] = reports.game_csv(cfg["name"], vals, sol.Y[0, 0], sp)
        v = max(float(np.abs(vals.lower - sol.Y[0]).max()),
                float(np.abs(vals.upper - sol.Y[0]).max()))
        return [(name, v, 1e-10, v <= 1e-10)]
    if name == "jump_formula":
        if inp.L is None:
            raise ConfigError("checks: jump_formula needs a lower barrier L")
        v = jump_formula_gap(sol)
        fL = max((float(np.abs(inp.f(k, inp.L[k], sol.Z[k])).max()) for k in range(sp.N)),
                 default=0.0)
        tol = max(2 * float(sp.dt.max(initial=0.0)) * fL, 1e-12)
        return [(name, v, tol, v <= tol)]
    if name == "direct_agreement":
        direct = solve_reflected(inp, basis)
        v = float(np.abs(direct.Y - sol.Y).max())
        return [(name, v, 1e-9, v <= 1e-9)]
    if name == "sandwich":
        w = sandwich_witness(inp, basis)
        return [(name, w.generator_l1, float("inf"), w.exists)]
    raise ConfigError(f"checks: unknown check {name!r}")


KNOWN_CHECKS = ("identity_2B", "identity_20B", "identity_20B_violation", "invariants",
                "snell_oracle", "dynkin", "jump_formula", "direct_agreement", "sandwich")


def prepare(cfg):
    if not isinstance(cfg, dict):
        raise ConfigError("config: expected a JSON object")
    if "name" not in cfg:
        raise ConfigError("name: missing")
    space = build_space(_need(cfg, "space", "config"))
    basis = build_basis(space)
    f = build_generator(cfg.get("generator"), space, basis)
    inp = build_input(cfg, space, f)
    checks = cfg.get("checks", [])
    if not isinstance(checks, list):
        raise ConfigError("checks: expected a list")
    for c in checks:
        if c not in KNOWN_CHECKS:
            raise ConfigError(f"checks: unknown check {c!r}; known: {list(KNOWN_CHECKS)}")
    return inp, basis


def run(source):
    """Solve a scenario and evaluate its checks; report texts are in ``files``."""
    cfg = load_config(source)
    inp, basis = prepare(cfg)
    sol = _solve(cfg, inp, basis)
    files = {"solution.csv": reports.solution_csv(sol)}
    checks = []
    for c in cfg.get("checks", []):
        checks.extend(_check(c, cfg, sol, basis, files))
    if checks:
        files["checks.csv"] = reports.checks_csv(checks)
    return RunResult(cfg["name"], sol, checks, files)


def schedule_from(cfg):
    sw = cfg.get("sweep") or {"base": 2, "j_min": 0, "j_max": 12}
    if "schedule" in sw:
        try:
            return [(float(n), float(m)) for n, m in sw["schedule"]]
        except (TypeError, ValueError):
            raise ConfigError("sweep.schedule: expected a list of [n, m] pairs") from None
    base = float(sw.get("base", 2))
    upper = bool(sw.get("upper", True))
    return [(base ** j, base ** j if upper else 0.0)
            for j in range(int(sw.get("j_min", 0)), int(sw.get("j_max", 12)) + 1)]


def sweep(source):
    """Penalization sweep against the reflected solution.

    Asserts that the error column decreases strictly and that the monotone
    flags hold; a ``sweep.tolerance`` entry also bounds the last error.
    """
    cfg = load_config(source)
    inp, basis = prepare(cfg)
    sched = schedule_from(cfg)
    rep = penalization_sweep(inp, sched, basis)
    checks = [("sweep_decreasing", float(np.diff(rep.errors).max(initial=0.0)), 0.0,
               rep.decreasing_until_exact()),
              ("sweep_monotone", float(sum(not (r.mono_n and r.mono_m) for r in rep.rows)),
               0.0, rep.monotone)]
    tol = (cfg.get("sweep") or {}).get("tolerance")
    if tol is not None:
        checks.append(("sweep_last_error", float(rep.errors[-1]), float(tol),
                       rep.errors[-1] <= float(tol)))
    files = {"convergence.csv": reports.convergence_csv(rep),
             "checks.csv": reports.checks_csv(checks)}
    return RunResult(cfg["name"], rep.reference, checks, files)


def write_outputs(result, out_dir):
    out = Path(out_dir)
    return [reports.write(out / name, text) for name, text in sorted(result.files.items())]
