"""
Fast oscillations barely move the solution
==========================================

A perturbation that oscillates at frequency 1/eps integrates to something
of size eps. That integrated size is what controls the effect on the
solution, not the perturbation's amplitude.
"""

import numpy as np

from nls_steer.relaxation import PerturbationProbe, endpoint_deviation_study, relaxation_seminorm
from nls_steer.state import SpectralState

for eps in (0.1, 0.03, 0.01, 0.003):
    probe = PerturbationProbe(eps, {(0, 0): 1.0}, kind="source")
    print(f"eps={eps:<6} seminorm={relaxation_seminorm(probe, resolution=8192):.5f}  "
          f"(2 eps = {2 * eps})")

u0 = SpectralState.from_modes(2, 8, {(1, 0): 0.1, (0, 1): 0.05j, (1, 1): 0.05})
probe_for = lambda e: PerturbationProbe(e, {(1, 0): 0.5}, kind="linear", frequency=2.0)
report = endpoint_deviation_study(u0, None, probe_for, [0.1, 0.05, 0.025, 0.0125])
print(report.to_csv())
print("halving factors:", np.round(report.ratios, 3))
