"""Strip and double-slot lateral modes: where the field sits and what it buys.

Run: python3 demos/01_modes.py
"""

import numpy as np

from iosac import config as cf
from iosac.modesolver import equivalent_sensitivity, mode_field, ring_sensitivity, solve_slab

cfg = cf.load_config()
modes = {}
for name in ("strip", "slot"):
    m = solve_slab(cf.cross_section(cfg, name), n_points=801)
    modes[name] = m
    print(
        f"{name:6s} n_eff={m.n_eff:.5f}  n_g={m.n_g:.4f}  "
        f"analyte fraction={m.confinement_analyte:.3f}  ring S={ring_sensitivity(m):.1f} nm/RIU"
    )

# the normal E field jumps by (n_SiN/n_water)^2 entering a gap, which is
# what pulls the slot mode into the analyte
cs = cf.cross_section(cfg, "slot")
wall = cs.thicknesses[0]
rail, gap = mode_field(cs, modes["slot"].n_eff, np.array([wall - 1e-12, wall + 1e-12]))
print(f"E jump at the rail/gap wall: x{gap / rail:.2f}")

for rho in (0.0, 0.25, 0.5, 0.75, 1.0):
    S = equivalent_sensitivity(rho, ring_sensitivity(modes["strip"]), ring_sensitivity(modes["slot"]))
    print(f"rho={rho:.2f}  mixed S={S:.1f} nm/RIU")
