"""
A nonholonomic particle, step by step
=====================================

A free particle in R^3 whose velocity must satisfy u_z = y u_x.  We load the
built-in scenario, look at the constrained acceleration at one state, then
integrate and compare with the closed-form motion.
"""

import numpy as np

from nhcartan.dynamics import gamma0, gamma_constrained, integrate
from nhcartan.geometry import TangentState
from nhcartan.scenarios import builtin

sc = builtin("nonholonomic_particle")
system = sc.system
print(f"n = {system.n}, rank of D = {system.m}")

# %%
# One state on the constraint
# ---------------------------
# At q = (0, 1, 0) with u = (1, 1, 1) the free particle would not accelerate.
# The constraint bends the path: the correction lies along the normal (-y, 0, 1).

st = TangentState([0.0, 1.0, 0.0], [1.0, 1.0, 1.0])
sample = gamma_constrained(system, st, verify=True)
print("unconstrained a0 :", gamma0(system, st))
print("constrained a    :", sample.a)
print("multiplier       :", sample.lam)
print("second algorithm :", sample.a_frame)

# %%
# A trajectory
# ------------
# u_y is constant, so y grows linearly, and sqrt(1 + y^2) u_x is conserved.

traj = integrate(system, sc.initial_state(), t_end=5.0, step=1e-3)
y = traj.q[:, 1]
print(f"energy drift      {traj.energy_drift:.2e}")
print(f"constraint drift  {traj.constraint_drift:.2e}")
print(f"spread of sqrt(1+y^2) u_x: {np.ptp(np.sqrt(1 + y ** 2) * traj.u[:, 0]):.2e}")

t = traj.t[-1]
y_end = 1.0 + t
x_exact = np.sqrt(2) * (np.arcsinh(y_end) - np.arcsinh(1.0))
print(f"x(5): integrated {traj.q[-1, 0]:.12f}, closed form {x_exact:.12f}")
