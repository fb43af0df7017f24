"""N agents playing the mean-field control.

Each agent flips at the mean-field rate u*(sigma, t).  As N grows the
empirical mean m_N(t) approaches m(t), and no single agent gains by
scaling its own control up or down.

Run:  python3 demos/04_n_agent_simulation.py
"""

from bandwagon.mfg import ControlLaw, enumerate_equilibria
from bandwagon.micro import MicroConfig, deviation_gain, lln_error, simulate
from bandwagon.model import constant_model

params = constant_model(1.0, 0.1)
(eq,) = enumerate_equilibria(params, -0.5)
law = ControlLaw(params, eq)

run = simulate(params, MicroConfig(1000, 20.0, 1, law, -0.5))
print(f"one run, N=1000: {run.n_events} flips out of {run.n_candidates} candidates, "
      f"m_N(20)={run.terminal_m:+.3f}, mean utility {run.utilities.mean():+.4f}")

print("\nsup_t |m_N(t) - m(t)| over 50 seeds")
for row in lln_error(params, eq, (100, 1000, 10000), range(50), T=20.0):
    print(f"  N={row['N']:<6} mean={row['mean']:.4f}  std={row['std']:.4f}")

res = deviation_gain(params, eq, MicroConfig(1000, 12.0, 0, law, -0.5), seeds=range(200))
print("\nagent 0 scales its control by alpha (N=1000, 200 common-random-number seeds)")
for row in res.table:
    print(f"  alpha={row['alpha']:<4} gain={row['mean_gain']:+.4f} +- {row['standard_error']:.4f}")
print(f"best gain {res.max_gain:+.4f}, within two standard errors of zero: {res.within_two_se}")
