"""Phase portraits in the low and high mobility regimes.

With constant mobility the origin is an unstable node when mu <= lam^2/8
and an unstable spiral above.  The stable manifold of each saddle reaches
the origin directly in the first case and winds around it in the second,
which is where multiple equilibria come from.

Run:  python3 demos/01_phase_portraits.py [out_dir]
"""

import os
import sys

from bandwagon.model import classify_regime, constant_model, fixed_points, nullcline_m
from bandwagon.phase import trace_manifold
from bandwagon.svg import PortraitLayers, render_portrait

out = sys.argv[1] if len(sys.argv) > 1 else "demo_out"
os.makedirs(out, exist_ok=True)

for mu in (0.1, 1.0):
    params = constant_model(1.0, mu)
    print(f"constant mobility, lambda=1, mu={mu}: regime {classify_regime(params).value}")
    for fp in fixed_points(params):
        ev = ", ".join(f"{e:.4f}" for e in fp.eigenvalues)
        print(f"  {fp.name} at ({fp.location.z:+.9f}, {fp.location.m:+.1f})  {fp.kind.value}  [{ev}]")

    layers = PortraitLayers((-3.0, 3.0))
    zs = [i / 40 for i in range(-120, 121)]
    layers.add_curve([(z, nullcline_m(params, z)) for z in zs], "nullcline", "dz = 0")
    for name in ("Q", "P"):
        man = trace_manifold(params, name)
        layers.add_curve(man.orbit.y, "stable", f"stable manifold of {name}")
        print(f"  stable manifold of {name}: {len(man.m_axis_crossings)} crossings of z = 0, "
              f"ends by {man.terminated_by}")
    for fp in fixed_points(params):
        layers.add_point(fp.location.z, fp.location.m, fp.name)
    path = os.path.join(out, f"portrait_mu{mu:g}.svg")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(render_portrait(layers, f"constant lambda=1 mu={mu:g}"))
    print(f"  wrote {path}\n")
