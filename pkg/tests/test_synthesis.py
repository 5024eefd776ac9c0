import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nls_steer.lattice import ExtensionChain, ModeSet, build_cube_generators, plan_extension_chain
from nls_steer.program import ControlProgram, constant_rate, smooth_rate
from nls_steer.synthesis import (OscillatorBundle, TargetSignal, assemble_program, boot_length,
                                 build_balanced, build_rho, build_upsilon, build_vr, build_vs,
                                 make_bundle, synthesize_chain)

CUBE = build_cube_generators([(1, 0), (0, 1)])
R, S = (1, 0), (0, 1)


def literal_bundle(w, eps, T=1.0):
    tau = boot_length(eps)
    target = TargetSignal.constant(w, tau, T - tau)
    vr = build_vr(T, eps)
    vs, share = build_vs(target, vr, T, eps)
    return OscillatorBundle(R, S, eps, T, vr, vs, target, share + 1, "boot", vs_share=share)


def family(w, mode=(2, -1), T=1.0):
    return ControlProgram(2, [constant_rate(mode, w, 0.0, T)], T)


def test_vr_plateau_and_total():
    vr = build_vr(1.0, 0.1)
    assert vr.square(0.5) == pytest.approx(math.pi / 0.99, abs=1e-12)
    assert vr.total == pytest.approx(math.pi, abs=1e-12)
    assert vr.sup_square() <= 2 * math.pi
    assert vr(0.0) == 0.0 and vr(1.0) == 0.0


def test_vs_plateau_for_constant_target():
    vr = build_vr(1.0, 0.1)
    target = TargetSignal.constant(0.5, 0.01, 0.99)
    vs, n = build_vs(target, vr, 1.0, 0.1)
    assert vs(0.5) == pytest.approx(0.5 * 0.99 / math.pi, abs=1e-12)
    assert round(float(vs(0.5)), 4) == 0.1576
    assert n == 1


def test_zero_target_needs_boot_energy():
    b = literal_bundle(0.0, 0.1)
    assert b.vs(0.5) == 0.0
    assert b.N == 2
    assert b.upsilon_end == pytest.approx(2 * math.pi, abs=1e-10)


def test_rho_for_real_and_imaginary_targets():
    vr = build_vr(1.0, 0.1)
    vs, _ = build_vs(TargetSignal.constant(0.5, 0.01, 0.99), vr, 1.0, 0.1)
    ups, rate = build_upsilon(vr, vs)
    t = np.linspace(0.02, 0.98, 7)
    rho, _ = build_rho(TargetSignal.constant(0.5, 0.01, 0.99), ups, R, S, rate)
    np.testing.assert_allclose(rho(t), 2 * t + ups(t), atol=1e-14)
    rho_i, _ = build_rho(TargetSignal.constant(0.5j, 0.01, 0.99), ups, R, S, rate)
    np.testing.assert_allclose(rho_i(t) - rho(t), math.pi / 4, atol=1e-14)


def test_rho_rate_bound():
    b = make_bundle(ControlProgram(2, [smooth_rate((2, -1), lambda t: 0.3 * np.exp(2j * t))], 1.0),
                    R, S, 0.1)
    t = np.linspace(0, 1, 2001)
    bound = 0.5 * 2.0 + b.gap + np.max(b.vr.square(t) + b.vs(t) ** 2)
    assert np.max(np.abs(b.rho_rate(t))) <= bound + 1e-9


def test_resonance_identity_on_plateau():
    b = literal_bundle(0.5, 0.1)
    tau = boot_length(0.1)
    t = np.linspace(tau, 1 - tau, 1001)
    assert np.max(np.abs(b.resonant_product(t) - 0.5)) <= 1e-10


def test_forcing_seen_by_state_matches_request():
    for profile in ("balanced", "boot"):
        b = make_bundle(family(0.5 + 0.2j), R, S, 0.05, profile)
        t = np.linspace(0.01, 0.99, 501)
        assert np.max(np.abs(b.resonant_forcing(t) - (0.5 + 0.2j))) <= 1e-10


def test_residual_is_first_order():
    eps = np.array([0.2, 0.1, 0.05])
    res = np.array([literal_bundle(0.5, e).residual() for e in eps])
    slope = np.polyfit(np.log(eps), np.log(res), 1)[0]
    assert slope >= 0.9
    assert np.all(res <= np.max(res / eps) * eps + 1e-15)
    assert np.all(res <= [literal_bundle(0.5, e).residual_bound() for e in eps])


def test_balanced_residual_is_smaller():
    for e in (0.2, 0.1, 0.05):
        assert make_bundle(family(0.5), R, S, e).residual() < literal_bundle(0.5, e).residual()


def test_carrier_derivatives_match_differences():
    b = make_bundle(family(0.3), R, S, 0.1)
    t = np.linspace(0.05, 0.95, 11)
    for h in (1e-4, 5e-5):
        fd_r = (b.v_r(t + h) - b.v_r(t - h)) / (2 * h)
        fd_s = (b.v_s(t + h) - b.v_s(t - h)) / (2 * h)
        err = max(np.max(np.abs(fd_r - b.dv_r(t))), np.max(np.abs(fd_s - b.dv_s(t))))
        assert err <= 2e3 * h * h


def test_program_supported_on_r_and_s():
    w = family(0.2)
    res = assemble_program(make_bundle(w, R, S, 0.1), w, CUBE)
    assert set(res.program.modes) == {R, S}
    assert all(c.tag == "carrier" for c in res.program.components)


def test_empty_chain_keeps_program():
    w = ControlProgram(2, [constant_rate((1, 1), 0.2, 0.0, 1.0)], 1.0)
    res = synthesize_chain(ExtensionChain(CUBE, []), w, 0.1)
    assert res.program is w and res.bundles == []


def test_single_step_chain_equals_assembly():
    w = family(0.2)
    chain = plan_extension_chain(CUBE, [(2, -1)], 3)
    a = synthesize_chain(chain, w, 0.1).program
    b = assemble_program(make_bundle(w, R, S, 0.1), w, CUBE).program
    times = np.linspace(0, 1, 257)
    np.testing.assert_array_equal(a.increments(times), b.increments(times))


def test_two_step_chain_stays_on_base():
    w = ControlProgram(2, [constant_rate((2, -1), 0.05, 0.0, 1.0),
                           constant_rate((-1, 0), 0.05, 0.0, 1.0)], 1.0)
    chain = plan_extension_chain(CUBE, [(2, -1), (-1, 0)], 3)
    res = synthesize_chain(chain, w, 0.1)
    assert len(res.bundles) == 2
    assert set(res.program.modes) <= CUBE.members
    assert all(c.tag == "carrier" for c in res.program.components)


def test_only_two_monomials_are_resonant():
    b = make_bundle(family(0.5), R, S, 0.1)
    freq = {"r": 1 / b.epsilon, "s": 2 / b.epsilon}
    # expand (u + iV) conj(u + iV) (u + iV) with V = v_r + v_s
    factors = [[("u", 0.0)] + [(k, f) for k, f in freq.items()],
               [("u", 0.0)] + [(k, -f) for k, f in freq.items()],
               [("u", 0.0)] + [(k, f) for k, f in freq.items()]]
    resonant = set()
    for combo in itertools.product(*factors):
        names = tuple(n for n, _ in combo)
        if names == ("u", "u", "u"):
            continue
        total = sum(f for _, f in combo) * b.epsilon
        if abs(total) < 1e-12:
            resonant.add(names)
        else:
            assert round(abs(total)) in (1, 2, 3, 4)
    assert resonant == {("r", "r", "u"), ("u", "r", "r"), ("s", "s", "u"), ("u", "s", "s"),
                        ("r", "s", "r")}


targets = st.tuples(st.floats(0.0, 1.0), st.floats(-1.0, 1.0), st.floats(0.5, 4.0),
                    st.floats(-3.0, 3.0), st.sampled_from([0.2, 0.1, 0.05]),
                    st.sampled_from(["balanced", "boot"]))


@settings(max_examples=50, deadline=None)
@given(targets)
def test_isoperimetric_and_boundary_exactness(params):
    amp, ripple, freq, drift, eps, profile = params
    w = lambda t: (amp + 0.3 * ripple * np.sin(freq * t)) * np.exp(1j * drift * t)
    b = make_bundle(ControlProgram(2, [smooth_rate((2, -1), w)], 1.0), R, S, eps, profile)
    assert abs(b.upsilon_end - math.pi * b.N) <= 1e-10
    assert b.vr(0.0) == 0.0 and b.vr(1.0) == 0.0
    assert b.vs(0.0) == 0.0 and b.vs(1.0) == 0.0
    assert b.v_r(0.0) == 0.0 and b.v_s(1.0) == 0.0
