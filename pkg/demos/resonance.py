"""
Forcing a mode you cannot touch
===============================

Only modes r=(1,0) and s=(0,1) are forced, yet mode (2,-1) should feel a
constant push. Fast carriers on r and s beat against each other through
the cubic term; their slow envelopes are tuned so the beat reproduces the
requested forcing while the phase drift they cause integrates to a
multiple of pi.
"""

import math

import numpy as np

from nls_steer.integrator import IntegratorConfig, integrate
from nls_steer.lattice import build_cube_generators, plan_extension_chain
from nls_steer.program import ControlProgram, constant_rate
from nls_steer.state import SpectralState, hs_norm
from nls_steer.synthesis import make_bundle, synthesize_chain

request = ControlProgram(2, [constant_rate((2, -1), 0.05, 0.0, 1.0)], 1.0)

# the bundle for one eps: envelopes, drift total and the beat it produces
bundle = make_bundle(request, (1, 0), (0, 1), eps=0.05)
info = bundle.describe()
print("N =", info["N"], " drift total / pi =", info["upsilon_end"] / math.pi)
t = np.linspace(0.05, 0.95, 5)
print("beat on (2,-1):", np.round(bundle.resonant_forcing(t), 12))

# integrating the carriers and comparing with direct forcing of (2,-1)
base = build_cube_generators([(1, 0), (0, 1)])
chain = plan_extension_chain(base, [(2, -1)], window=3)
u0 = SpectralState.zeros(2, 8)
reference = integrate(u0, request, IntegratorConfig(dt=1e-3, horizon=1.0)).final
print("reference |u(T)|_Hs =", round(hs_norm(reference), 4))
for eps in (0.2, 0.1, 0.05, 0.025):
    program = synthesize_chain(chain, request, eps).program
    final = integrate(u0, program, IntegratorConfig(dt=math.pi * eps / 32, horizon=1.0)).final
    print(f"eps={eps:<6} end-point gap {hs_norm(final - reference):.4f}  "
          f"(2,-1) coefficient {final[(2, -1)]:.4f}")

# at eps >= 0.1 the carriers pump nearby modes and the gap is large;
# it only becomes small once 1/eps clearly dominates the carrier energy
