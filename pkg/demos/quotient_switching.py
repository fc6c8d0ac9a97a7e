"""What happens when LaBudde-Greenspan switches away from its difference quotient.

With a large switch tolerance and dt = 0.1 the spring often falls back to a
rescue formula. The Janz mid-point rescue lets energy drift upward, while the
perturbed mid-point and trapezoidal rescues keep it bounded. With a tight
tolerance every rescue reproduces the plain scheme.

    python3 demos/quotient_switching.py
"""
import numpy as np

from emsplit import Schedule, SolverConfig, integrate, invariant_series, neo_hookean_spring

spec, s0 = neo_hookean_spring()
schedule = Schedule.uniform(0.1, 100.0)
base = SolverConfig(closed_quotient=False, on_nonconvergence="accept")

for tol in (1e-1, 1e-8):
    for rescue in ("janz", "pm", "pt"):
        traj = integrate(spec, "lg", s0, schedule, base.replace(tol_Q=tol, rescue=rescue))
        series = invariant_series(traj, spec)
        switches = int(traj.switch_count.sum())
        print(f"tol_Q {tol:<6g} {rescue:<5} switches {switches:<5d} final dH {series.dH[-1]:+.3e}  "
              f"max dH {series.dH.max():+.3e}  max |dH| {np.abs(series.dH).max():.3e}")
