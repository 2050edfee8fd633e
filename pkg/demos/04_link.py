"""Sensing and data on one waveform: BER curves and the spectral readout.

A shortened run (16384 bits) so the demo finishes in a few seconds; the
full 102400-bit sweep is `iosac link`.

Run: python3 demos/04_link.py
"""

from dataclasses import replace

from iosac import config as cf
from iosac.link import run_link
from iosac.sensing import SensingSeries, track_resonance

import numpy as np

cfg = cf.load_config()
dev = cf.build_devices(cfg)
lc = cf.link_config(cfg, dev.ring)
lc = replace(lc, sampling=replace(lc.sampling, n_bits=16384))
cases = cf.link_cases(cfg, dev.analyte)[:3]  # B2B, DI, 2.5%

run = run_link(lc, cases, received_dbm=[-30.0, -28.0, -26.0], collect_psd=True)
for c in run.curves:
    pts = "  ".join(f"{p.received_power_dbm:.0f} dBm: {p.ber_counted:.1e} (q={p.q:.2f})" for p in c.points)
    print(f"{c.label:10s} {pts}")

di, salt = run.transmission_spectrum("DI"), run.transmission_spectrum("NaCl 2.5%")
lam = track_resonance(SensingSeries(np.array([cases[1].n_analyte, cases[2].n_analyte]), [di, salt], "RI"))
programmed = dev.ring.ring_sensitivity() * (cases[2].n_analyte - cases[1].n_analyte)
print(f"shift read from the received spectrum: {(lam[1] - lam[0]) * 1e12:.1f} pm (programmed {programmed * 1e3:.1f} pm)")
