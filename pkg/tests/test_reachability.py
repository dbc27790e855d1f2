import math

import numpy as np
import pytest

from layermpc import (
    DimensionMismatch,
    LinearSystem,
    Mode,
    OutsideDomain,
    Polytope,
    SetLadder,
    build_ladder,
    check_contractive,
    equilibrium_set,
    input_set,
    layer_of,
    one_step_set,
)
from layermpc.reachability import TRACKING
from layermpc.simulator import sample_domain

from oracles import directions, saturation_horizon, support_j_step


def test_system_validation():
    X = Polytope.from_box([-1, -1], [1, 1])
    U = Polytope.from_box([-1], [1])
    with pytest.raises(ValueError):
        LinearSystem(np.eye(2), [[1.0], [0.0]], X, U)  # uncontrollable
    with pytest.raises(DimensionMismatch):
        LinearSystem(np.eye(2), [[1.0], [0.0]], Polytope.from_box([-1], [1]), U)
    with pytest.raises(ValueError):
        LinearSystem([[1, 1], [0, 1]], [[0.0], [1.0]], Polytope([[1, 0]], [1]), U)


def test_system_round_trip(di_sys):
    s2 = LinearSystem.from_dict(di_sys.to_dict())
    assert s2.digest() == di_sys.digest()
    np.testing.assert_allclose(s2.step([1.0, 0.5], [0.05, 0.0]), di_sys.step([1.0, 0.5], [0.05, 0.0]))


def test_mode_parse_and_str():
    assert str(TRACKING) == "tracking"
    assert Mode.parse("layer3") == Mode(3)
    assert Mode.parse("tracking").tracking
    with pytest.raises(ValueError):
        Mode.parse("layerx")


def test_equilibrium_sets_double_integrator(di_sys):
    Zs, Xs, Us = equilibrium_set(di_sys)
    assert Xs.equals(Polytope.from_box([-5, -0.025], [5, 0.025]))
    for u in Us.vertices_2d():
        assert np.max(np.abs(u)) <= 0.05 + 1e-9
    assert Us.contains([0.0, 0.0])
    assert not Us.contains([0.05, 0.05])


def test_equilibrium_set_oscillator(osc_sys):
    _, Xs, Us = equilibrium_set(osc_sys)
    # B = (0, 1): the first row of (A - I) x must vanish and the second fixes u
    assert Xs.contains([0.0, 0.0])
    slope = 0.2775 / 1.3499
    x1_max = 1.0 / (1.0 - slope)  # |u| = |x1 - x2| <= 1
    for sgn in (1.0, -1.0):
        assert Xs.contains(sgn * np.array([x1_max, slope * x1_max]))
        assert not Xs.contains(sgn * np.array([x1_max + 1e-4, slope * (x1_max + 1e-4)]))
    V = Xs.vertices_2d()
    for v in V:
        r = (osc_sys.A - np.eye(2)) @ v
        u = -r[1]
        assert abs(r[0]) <= 1e-6
        assert abs(u) <= 1 + 1e-9


def test_input_set_of_equilibria_is_steady_inputs(di_sys):
    _, Xs, Us = equilibrium_set(di_sys)
    Psi = input_set(Xs, di_sys)
    # Psi(Xs) contains Us; it is larger because Xs has thickness in x2
    assert Us.is_subset(Psi)


def test_input_set_of_origin():
    X = Polytope.from_box([-1, -1], [1, 1])
    U = Polytope.from_box([-1, -1], [1, 1])
    sys = LinearSystem(np.eye(2), np.eye(2), X, U)
    assert input_set(Polytope.point([0.0, 0.0]), sys).equals(Polytope.point([0.0, 0.0]))


def test_one_step_set_contains_invariant_target(di_sys):
    _, Xs, _ = equilibrium_set(di_sys)
    S1 = one_step_set(Xs, di_sys.U, di_sys)
    assert Xs.is_subset(S1)


def test_one_step_set_grid_oracle(di_sys):
    _, Xs, _ = equilibrium_set(di_sys)
    S1 = one_step_set(Xs, di_sys.U, di_sys)
    grid = np.stack(np.meshgrid(np.linspace(-5, 5, 41), np.linspace(-0.2, 0.2, 41)), -1).reshape(-1, 2)
    for x in grid:
        inside = S1.contains(x)
        # x is in S1 iff the inputs landing A x + B u in Xs meet U
        fixed = Polytope(
            np.vstack([Xs.G @ di_sys.B, di_sys.U.G]),
            np.r_[Xs.h - Xs.G @ di_sys.A @ x, di_sys.U.h],
        )
        expected = di_sys.X.contains(x) and not fixed.is_empty
        assert inside == expected, x


def test_one_step_set_empty_target(di_sys):
    assert one_step_set(Polytope.empty(2), di_sys.U, di_sys).is_empty


def test_ladder_double_integrator(di_ladder, di_sys):
    j_sat = saturation_horizon(di_sys, di_ladder.Xs, directions())
    assert j_sat == 13
    assert di_ladder.converged
    assert di_ladder.k_star == math.ceil(j_sat / 3) == 5
    # every rung agrees with the trajectory-LP support of S_3k
    for k, P in enumerate(di_ladder.rungs):
        for d in directions(8):
            assert P.support(d) == pytest.approx(support_j_step(di_sys, di_ladder.Xs, 3 * k, d), abs=1e-7)


def test_ladder_oscillator(osc_ladder, osc_sys):
    j_sat = saturation_horizon(osc_sys, osc_ladder.Xs, directions())
    assert osc_ladder.converged
    assert osc_ladder.k_star == math.ceil(j_sat / 5) == 5


def test_ladder_horizon_two(di_sys):
    ladder = build_ladder(di_sys, 2)
    assert ladder.k_star == math.ceil(13 / 2) == 7


def test_ladder_not_converged_flag(di_sys):
    ladder = build_ladder(di_sys, 3, max_rungs=1)
    assert not ladder.converged
    assert len(ladder.rungs) == 2


def test_single_rung_ladder():
    # A = I, B = I: every admissible state is an equilibrium, so Xs = X already
    X = Polytope.from_box([-1, -1], [1, 1])
    sys = LinearSystem(np.eye(2), np.eye(2), X, Polytope.from_box([-1, -1], [1, 1]))
    ladder = build_ladder(sys, 2)
    assert ladder.converged and ladder.k_star == 0
    assert layer_of([0.5, 0.5], ladder) == TRACKING


def test_rungs_nested(di_ladder):
    for inner, outer in zip(di_ladder.rungs, di_ladder.rungs[1:]):
        assert inner.is_subset(outer)
        assert not outer.is_subset(inner)


def test_psi_cache_matches_input_sets(di_ladder, di_sys):
    for k in (1, 3):
        assert di_ladder.psi[k].equals(input_set(di_ladder.rungs[k], di_sys))


def test_layer_of(di_ladder):
    assert layer_of([0.0, 0.0], di_ladder) == TRACKING
    assert layer_of([-4.9, 0.96], di_ladder) == Mode(4)
    with pytest.raises(OutsideDomain):
        layer_of([0.0, 0.99], di_ladder)
    with pytest.raises(OutsideDomain):
        layer_of([6.0, 0.0], di_ladder)


def test_decomposition_disjoint(di_ladder):
    pts = sample_domain(di_ladder, 300, seed=1)
    for x in pts:
        mode = layer_of(x, di_ladder)
        k = mode.layer
        if mode.tracking:
            assert di_ladder.S_N.contains(x)
        else:
            assert di_ladder.rungs[k + 1].contains(x)
            assert not di_ladder.rungs[k].contains(x)


def test_domain_is_control_invariant(di_ladder, di_sys):
    # every sampled point of the domain has an admissible input keeping it in the domain
    D = di_ladder.domain
    for x in sample_domain(di_ladder, 50, seed=7):
        fixed = Polytope(np.vstack([D.G @ di_sys.B, di_sys.U.G]), np.r_[D.h - D.G @ di_sys.A @ x, di_sys.U.h])
        assert not fixed.is_empty


def test_contractive_passes(di_ladder):
    rep = check_contractive(di_ladder, eps=1e-6)
    assert rep.passed
    assert rep.margin == pytest.approx(0.075, abs=1e-6)
    assert rep.to_dict()["verdict"] == "passed"


def test_contractive_fails_above_margin(di_ladder):
    rep = check_contractive(di_ladder, eps=0.15)
    assert not rep.passed
    assert rep.failing
    assert rep.to_dict()["verdict"] == "inconclusive-negative"


def test_ladder_json_round_trip(di_ladder, tmp_path):
    path = tmp_path / "ladder.json"
    di_ladder.save(path)
    back = SetLadder.load(path)
    assert back.k_star == di_ladder.k_star
    assert back.converged
    for a, b in zip(back.rungs, di_ladder.rungs):
        assert a.equals(b)
    assert layer_of([-4.9, 0.96], back) == Mode(4)
