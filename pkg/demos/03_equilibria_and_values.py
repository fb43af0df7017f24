"""Equilibria for a given initial opinion and their value functions.

Each bounded orbit through m(0) = m0 is an equilibrium.  For every one we
rebuild V(+1, t) and V(-1, t) from the HJB equation, check that their
difference reproduces z(t), and verify the consistency relation
m(t) = E[sigma(t)] through an independent ODE for the probability p(t).

Run:  python3 demos/03_equilibria_and_values.py
"""

import numpy as np

from bandwagon.mfg import consistency_check, enumerate_equilibria, hjb_residual, value_function
from bandwagon.model import constant_model, crowding_model

cases = [("low mobility", constant_model(1.0, 0.1), -0.5),
         ("high mobility", constant_model(1.0, 1.0), 0.05),
         ("crowding above mu_hat", crowding_model(0.5, 4.6, 0.5), 0.05)]

for title, params, m0 in cases:
    eqs = enumerate_equilibria(params, m0)
    print(f"{title}, m0={m0}: {len(eqs)} equilibria")
    for e in eqs:
        vs = value_function(params, e)
        gap = np.max(np.abs(vs.gradient - e.orbit(vs.t)[:, 0]))
        print(f"  z0={e.z0:+.6f} -> {e.attractor:<16} horizon={e.horizon:6.1f}  "
              f"V(+1,0)={vs.v_plus[0]:+.5f}  V(-1,0)={vs.v_minus[0]:+.5f}  "
              f"hjb={hjb_residual(params, e, vs):.1e}  consistency={consistency_check(params, e):.1e}  "
              f"|dV - z|={gap:.1e}")
    print()
