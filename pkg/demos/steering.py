"""
Coast, then kick
================

With every observed mode directly forced, reaching a target is a matter of
letting the state drift freely and applying a short strong push at the
end. Shrinking the push window makes the nonlinearity irrelevant.
"""

import numpy as np

from nls_steer.lattice import ModeSet
from nls_steer.state import SpectralState
from nls_steer.steering import kick_study, steer_projection, target_grid

box = ModeSet.box(2, 1)
targets = target_grid(box, radius=0.1, count=8, seed=1, s=1.1)
start = SpectralState.from_modes(2, 8, {(1, 0): 0.1, (0, 1): 0.05j})
report = kick_study(start, targets, box, horizon=1.0, windows=[0.2, 0.1, 0.05, 0.025])
for window, err, leak in zip(report.eps, report.sup_errors, report.leakage.max(axis=0)):
    print(f"window {window:<6} worst target error {err:.2e}  outside leakage {leak:.1e}")

# a non-coordinate target: the symmetric combination of two modes
frame = [SpectralState.from_modes(2, 4, {(1, 0): 2 ** -0.5, (0, 1): 2 ** -0.5})]
base = ModeSet.of([(0, 0), (1, 0), (0, 1), (1, 1)])
rep = steer_projection(SpectralState.zeros(2, 4), frame, [[0.05], [0.05j]], base,
                       [0.2, 0.1, 0.05])
print("frame coordinate errors:\n", np.round(rep.errors, 6))
