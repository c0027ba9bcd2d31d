"""Two outcomes, information revealed in one lump at t = 1.

The Snell envelope starts at 3, the average of the two terminal values, and
satisfies the recursion with a conditional expectation.  The pathwise version
of the recursion (no expectation) misses on both outcomes, because the
martingale part of Y jumps exactly when the information arrives.
"""

import numpy as np

from rbsdelab import RBSDEInput, SnellProblem, counterexample_space, snell_envelope, solve_reflected
from rbsdelab.snell import pathwise_identity_gap, projection_identity_gap

sp = counterexample_space()
L = np.array([[2.0, 2.0], [0.0, 0.0], [0.0, 0.0]])
xi = np.array([5.0, 1.0])

prob = SnellProblem(sp, L, xi)
Y = snell_envelope(prob)
print("Y (rows are grid indices, columns outcomes w1, w2):")
print(Y)
print("recursion with conditional expectation, worst gap:", projection_identity_gap(prob, Y))
print("pathwise recursion, gap per outcome at index 0:", pathwise_identity_gap(prob, Y).gaps[0])

sol = solve_reflected(RBSDEInput(sp, xi, L=L))
print("reflected solver agrees:", np.array_equal(sol.Y, Y), "| reflection K:", sol.K[-1])
print("martingale part M:", sol.M[:, 0], sol.M[:, 1])
