"""Two coupling gaps on the same hybrid ring: one under-, one over-coupled.

Run: python3 demos/02_ring.py
"""

from iosac import config as cf
from iosac import pipeline as pl
from iosac.ring import metrics

cfg = cf.load_config()
dev = cf.build_devices(cfg)
ring = dev.ring
print(f"round trip: L={ring.length * 1e6:.1f} um, loss={ring.round_trip_loss_db:.3f} dB, a={ring.a:.4f}")

for name, spec in pl.device_spectra(cfg, dev).items():
    r = cf.build_ring(cfg, dev.strip_mode, dev.slot_mode, dev.analyte, name)
    m = metrics(spec)
    regime = "under" if r.t > r.a else "over"
    print(
        f"{name}: t={r.t:.4f} ({regime}-coupled)  Q={m.Q:.0f}  "
        f"FWHM={m.fwhm * 1e12:.1f} pm  ER={m.er_db:.1f} dB  FSR={m.fsr * 1e9:.3f} nm"
    )
