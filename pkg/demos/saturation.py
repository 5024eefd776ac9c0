"""
Which mode sets generate every lattice point
============================================

Starting from a handful of forced modes, the move ``2r - s`` keeps adding
new wave vectors. Here we look at how quickly the vertices of the unit
square fill a box, and why the even sublattice never does.
"""

from nls_steer.lattice import ModeSet, build_cube_generators, closure_sequence, \
    is_saturating_within, plan_extension_chain

# the four vertices of the unit square
cube = build_cube_generators([(1, 0), (0, 1)])
levels = closure_sequence(cube, window=5)
for j, level in enumerate(levels):
    print(f"level {j}: {len(level.members):4d} modes")

# every point of the 11 x 11 box is reached
print("fills |k| <= 5:", levels[-1].members == ModeSet.box(2, 5).members)

# even vectors only ever produce even vectors; the witness is the first miss
even = ModeSet.of([(0, 0), (2, 0), (0, 2), (2, 2)])
print("even sublattice:", is_saturating_within(even, 3))

# a concrete recipe for reaching the 3 x 3 box from the square
chain = plan_extension_chain(cube, ModeSet.box(2, 1).members, window=2)
for step in chain.steps:
    print(f"  2*{step.r} - {step.s} = {step.new}")
