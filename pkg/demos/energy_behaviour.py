"""Energy behaviour of the five integrators on the neo-Hookean spring.

One particle is tethered to the origin by a stiff nonlinear spring. The
mid-point rule lets the energy wander, LaBudde-Greenspan holds it to round-off,
and the three dissipative schemes only ever lose energy. Angular momentum is
conserved by all five.

    python3 demos/energy_behaviour.py
"""
import numpy as np

from emsplit import Schedule, integrate, invariant_series, monotonicity_report, neo_hookean_spring

spec, s0 = neo_hookean_spring()
schedule = Schedule.uniform(1e-3, 10.0)

print(f"{'kind':<5}{'final dH/|H0|':>16}{'max |dH|/|H0|':>16}{'max |dJ|':>12}  monotone")
for kind in ("mp", "lg", "ge", "pm", "pt"):
    traj = integrate(spec, kind, s0, schedule, stride=10)
    series = invariant_series(traj, spec)
    h0 = abs(series.H0)
    mono = monotonicity_report(series, 1e-9 * h0).ok
    print(f"{kind:<5}{series.dH[-1] / h0:>16.3e}{np.abs(series.dH).max() / h0:>16.3e}"
          f"{np.abs(series.dJ).max():>12.1e}  {mono}")
