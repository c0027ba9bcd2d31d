"""A stopping game whose value equals the two-barrier solution.

The maximiser collects L when stopping first, the minimiser pays U.  Lower
and upper values are found by trying every pair of stopping times and
compared with the backward solver.
"""

import numpy as np

from rbsdelab import RBSDEInput, cond_expect, random_tree, solve_reflected
from rbsdelab.dynkin import GamePayoff, game_value_enum
from rbsdelab.generators import cubic

rng = np.random.default_rng(7)
sp = random_tree(rng, 3, 2)
# barriers must be adapted: average raw noise over the atoms of each level
noise = rng.normal(size=(sp.N + 1, sp.n))
L = -0.5 + 0.3 * np.stack([cond_expect(sp, noise[k], k) for k in range(sp.N + 1)])
U = L + 0.8
xi = rng.normal(size=sp.n)

sol = solve_reflected(RBSDEInput(sp, xi, cubic(sp, 0.5), None, L, U))
vals = game_value_enum(GamePayoff.from_solution(sol))
print(f"{sp.n} outcomes, {vals.count} stopping times per player")
print(f"lower value {vals.lower[0]:.12f}")
print(f"upper value {vals.upper[0]:.12f}")
print(f"solver Y_0  {sol.Y[0, 0]:.12f}")
print("maximiser stops at", dict(zip(sp.ids, vals.tau.tolist())))
print("minimiser stops at", dict(zip(sp.ids, vals.sigma.tolist())))
