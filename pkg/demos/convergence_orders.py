"""Convergence orders on the spring against a fine mid-point reference.

The reference is integrated with dt = 1e-6 and checked against a run at
twice that step; it is cached under ``.reference_cache/`` so later runs are
instant. Second-order schemes show order 2, generalized Eyre order 1.

    python3 demos/convergence_orders.py
"""
from pathlib import Path

from emsplit import convergence_study, neo_hookean_spring, verified_reference

CACHE = Path(__file__).resolve().parents[1] / ".reference_cache"
DTS = (1e-2, 5e-3, 1e-3, 5e-4, 1e-4)

spec, s0 = neo_hookean_spring()
check = verified_reference(spec, s0, 10.0, 1e-6, cache_dir=CACHE)
print(f"reference discrepancy q {check.discrepancy_q:.2e}  p {check.discrepancy_p:.2e}\n")

for kind in ("mp", "lg", "ge", "pm", "pt"):
    print(kind)
    for row in convergence_study(spec, kind, s0, 10.0, DTS, check.state):
        print(f"  dt {row.dt:<8g} err q {row.rel_err_q:.3e}  p {row.rel_err_p:.3e}"
              f"  order {row.order_q:5.2f} {row.order_p:5.2f}")
