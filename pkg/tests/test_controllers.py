import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from layermpc import (
    ControllerConfig,
    Flavor,
    LayeredMPC,
    Mode,
    OutsideDomain,
    Polytope,
    QpStatus,
    SetpointNotEquilibrium,
    TrackingMPC,
    build_layered_qp,
    build_tracking_qp,
    distance_to_set,
    kappa_mpc,
    solve_qp,
)
from layermpc.controllers import prediction_matrices
from layermpc.reachability import TRACKING
from layermpc.simulator import sample_domain


def test_prediction_matrices_match_simulation(di_sys):
    rng = np.random.default_rng(0)
    Phi, Gam = prediction_matrices(di_sys.A, di_sys.B, 4)
    x0 = rng.normal(size=2)
    u = rng.normal(size=8)
    x = x0
    for j in range(5):
        np.testing.assert_allclose(Phi[j] @ x0 + Gam[j] @ u, x, atol=1e-12)
        if j < 4:
            x = di_sys.step(x, u[2 * j:2 * j + 2])


def test_config_validation_and_round_trip():
    cfg = ControllerConfig(3, np.eye(2), np.eye(1), 100 * np.eye(2), Flavor.LAYERED)
    back = ControllerConfig.from_dict(cfg.to_dict())
    assert back.N == 3 and back.flavor is Flavor.LAYERED
    np.testing.assert_array_equal(back.T, cfg.T)
    with pytest.raises(ValueError):
        ControllerConfig(3, -np.eye(2), np.eye(1), np.eye(2), Flavor.LAYERED)
    with pytest.raises(ValueError):
        ControllerConfig(0, np.eye(2), np.eye(1), np.eye(2), Flavor.LAYERED)


def test_setpoint_must_be_equilibrium(di_layered):
    with pytest.raises(SetpointNotEquilibrium):
        di_layered.step([0.0, 0.0], [0.0, 0.5])


def test_outside_domain(di_layered, di_mpct3):
    with pytest.raises(OutsideDomain):
        di_layered.step([0.0, 0.99], [0.0, 0.0])
    with pytest.raises(OutsideDomain):
        di_mpct3.step([6.0, 0.0], [0.0, 0.0])


def test_at_setpoint_applies_steady_input(di_layered):
    out = di_layered.step([1.0, 0.0], [1.0, 0.0])
    np.testing.assert_allclose(out.u0, 0.0, atol=1e-8)
    assert out.optimal_cost == pytest.approx(0.0, abs=1e-9)
    assert out.mode == TRACKING


def test_layered_qp_in_tracking_mode_equals_baseline(di_ladder, di_weights):
    # substituting x^a_j = x_s and u^a_j = u_s maps one problem onto the other
    layered = ControllerConfig(3, flavor=Flavor.LAYERED, **di_weights)
    base = ControllerConfig(3, flavor=Flavor.TRACKING, **di_weights)
    for x in sample_domain(di_ladder, 10, seed=3):
        if not di_ladder.S_N.contains(x):
            continue
        p1 = build_layered_qp(x, [0.0, 0.0], di_ladder, layered, TRACKING)
        p2 = build_tracking_qp(x, [0.0, 0.0], di_ladder.system, base)
        s1, s2 = solve_qp(p1), solve_qp(p2)
        assert s1.value == pytest.approx(s2.value, abs=1e-7)
        np.testing.assert_allclose(p1.block(s1.z, "u"), p2.block(s2.z, "u"), atol=1e-6)


def test_layer_mode_constraints(di_ladder, di_weights):
    cfg = ControllerConfig(3, flavor=Flavor.LAYERED, **di_weights)
    x = np.array([-4.9, 0.96])
    out = kappa_mpc(x, [-4.0, 0.0], di_ladder, cfg)
    assert out.mode == Mode(4)
    target = di_ladder.rungs[4]
    assert target.contains(out.predicted_states[-1])
    for xa in out.aux_states:
        assert target.contains(xa)
    for ua in out.aux_inputs:
        assert di_ladder.psi[4].contains(ua)
    assert di_ladder.Xs.contains(out.artificial_setpoint)
    for u in out.predicted_states:
        assert di_ladder.system.X.contains(u)


def test_baseline_infeasible_outside_S_N(di_ladder, di_mpct3):
    x = np.array([-4.9, 0.96])
    assert not di_ladder.S_N.contains(x)
    out = di_mpct3.step(x, [0.0, 0.0])
    assert out.qp_status is QpStatus.INFEASIBLE
    assert np.all(np.isnan(out.u0))


def test_far_setpoint_gives_offset(di_layered):
    # a nearby state cannot reach x* = (4.9, 0) within N steps: x_s stops short
    out = di_layered.step([-4.0, 0.0], [4.9, 0.0])
    assert out.mode == TRACKING
    assert out.artificial_setpoint[0] < 4.9 - 1e-3


def test_distance_to_set():
    P = Polytope.from_box([-1, -1], [1, 1])
    assert distance_to_set([0.5, 0.0], P) == 0.0
    assert distance_to_set([3.0, 0.0], P) == pytest.approx(4.0)
    assert distance_to_set([2.0, 2.0], P, np.diag([1.0, 4.0])) == pytest.approx(5.0)


def test_distance_to_set_grid_oracle():
    tri = Polytope([[-1, 0], [0, -1], [1, 1]], [0, 0, 1])
    # dense boundary sampling as the oracle
    t = np.linspace(0, 1, 4001)
    edges = np.vstack([np.c_[t, 0 * t], np.c_[0 * t, t], np.c_[t, 1 - t]])
    Q = np.diag([2.0, 0.5])
    rng = np.random.default_rng(4)
    for x in rng.uniform(-2, 3, size=(20, 2)):
        if tri.contains(x):
            continue
        diff = edges - x
        oracle = np.min(np.einsum("ij,jk,ik->i", diff, Q, diff))
        assert distance_to_set(x, tri, Q) == pytest.approx(oracle, rel=1e-5, abs=1e-6)


def test_estimator_api(di_sys, di_ladder):
    est = LayeredMPC(N=3, ladder=di_ladder)
    params = est.get_params()
    assert params["N"] == 3 and params["warm_start"] is True
    with pytest.raises(NotFittedError):
        est.step([0.0, 0.0], [0.0, 0.0])
    twin = clone(est)
    assert twin.get_params()["ladder"].k_star == di_ladder.k_star
    est.fit(di_sys)
    U = est.predict([[0.0, 0.0], [-4.9, 0.96]], [0.0, 0.0])
    assert U.shape == (2, 2)
    assert est.mode([[0.0, 0.0], [-4.9, 0.96]]) == [TRACKING, Mode(4)]
    with pytest.raises(ValueError):
        LayeredMPC(N=2, ladder=di_ladder).fit(di_sys)


def test_tracking_estimator_without_ladder(di_sys):
    est = TrackingMPC(N=3).fit(di_sys)
    u = est.predict([[0.5, 0.0]], [0.0, 0.0])
    assert np.all(np.isfinite(u))
    assert np.max(np.abs(u)) <= 0.05 + 1e-9


def test_predict_rejects_bad_shape(di_layered):
    with pytest.raises(ValueError):
        di_layered.predict([[0.0, 0.0, 0.0]], [0.0, 0.0])


def test_warm_start_does_not_change_result(di_sys, di_ladder, di_weights):
    warm = LayeredMPC(N=3, ladder=di_ladder, warm_start=True, **di_weights).fit(di_sys)
    cold = LayeredMPC(N=3, ladder=di_ladder, warm_start=False, **di_weights).fit(di_sys)
    x = np.array([-4.9, 0.96])
    for _ in range(10):
        a, b = warm.step(x, [-4.0, 0.0]), cold.step(x, [-4.0, 0.0])
        np.testing.assert_allclose(a.u0, b.u0, atol=1e-6)
        x = di_sys.step(x, b.u0)
