"""Salt-water calibration and temperature drift of the hybrid ring.

Run: python3 demos/03_sensing.py
"""

from iosac import config as cf
from iosac import pipeline as pl
from iosac.sensing import fit_sensitivity, fit_thermal, shift_to_concentration

cfg = cf.load_config()
dev = cf.build_devices(cfg)

rep = fit_sensitivity(pl.ri_series(cfg, dev))
print(f"S = {rep.S:.2f} nm/RIU (rms residual {rep.fit_residual:.1e} nm)")
print(f"FWHM = {rep.fwhm * 1e3:.1f} pm, FOM = {rep.fom:.0f} /RIU, DL = {rep.dl:.2e} RIU")
for n, lam in zip(rep.stimuli, rep.tracked):
    print(f"  n={n:.5f}  resonance={lam:.4f} nm")

# reading a concentration back from a measured shift
shift = rep.tracked[1] - rep.tracked[0]
print(f"a {shift * 1e3:.0f} pm shift reads as {shift_to_concentration(dev.analyte, shift, rep.S):.2f} wt% NaCl")

drift = fit_thermal(pl.thermal_series(cfg, dev))
print(f"thermal drift = {drift:.2f} pm/C with SiN dn/dT = {dev.materials['SiN']['thermo_optic']:.3e} /C")
