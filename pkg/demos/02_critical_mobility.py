"""The crowding model: critical mobility and the limit cycle.

m*(mu) is where the stable manifold of Q first meets z = 0.  It grows with
mu and reaches 1 at the critical level mu_hat, where the manifolds of the
two saddles join.  Above mu_hat an attracting periodic orbit exists and its
period grows as mu comes down toward mu_hat.

Run:  python3 demos/02_critical_mobility.py
"""

from bandwagon.model import crowding_model
from bandwagon.phase import find_limit_cycle, find_mu_hat, m_star

lam, eps = 0.5, 0.5
print("m*(mu) for lambda=0.5, epsilon=0.5")
for mu in (0.05, 0.5, 1.0, 2.0, 3.0, 4.0, 4.5):
    print(f"  mu={mu:<5} m*={m_star(crowding_model(lam, mu, eps)):.6f}")

res = find_mu_hat(lam, eps, (1.0, 10.0), 1e-3)
print(f"\nmu_hat = {res.mu_hat:.6f} after {len(res.evaluations)} evaluations of m*")

for mu in (4.0, 4.6):
    search = find_limit_cycle(crowding_model(lam, mu, eps))
    if not search.found:
        print(f"mu={mu}: no periodic orbit on the section scan")
        continue
    c = search.cycle
    print(f"mu={mu}: {len(search.cycles)} cycle(s); anchor m={c.anchor.m:.7f}, "
          f"period={c.period:.4f}, amplitude={c.amplitude:.4f}, R'={c.multiplier:.4f}")

print("\nperiod as mu decreases toward mu_hat")
for d in (0.5, 0.1, 0.01):
    c = find_limit_cycle(crowding_model(lam, res.mu_hat + d, eps)).cycle
    print(f"  mu_hat+{d:<4} period={c.period:.4f}")

print("\njust below mu_hat the scan finds an attracting/repelling pair")
c = find_limit_cycle(crowding_model(lam, 4.5, eps))
for cyc in c.cycles:
    print(f"  mu=4.5 anchor m={cyc.anchor.m:.5f}  R'={cyc.multiplier:.4f}")
