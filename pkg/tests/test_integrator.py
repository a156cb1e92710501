import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nonsmooth.core import PiecewiseSystem, SignChannel, SwitchingSurface, filippov_sliding_field
from nonsmooth.integrator import (
    ChatteringError,
    EventKind,
    IntegrationError,
    Mode,
    SolverConfig,
    Trajectory,
    UnsupportedModelError,
    integrate_ap,
    integrate_filippov,
    integrate_naive,
    integrate_smooth,
    locate_event,
    regularized_system,
    sat,
    trajectory_distance,
)
from nonsmooth.models import (
    HIDDEN_CHUA,
    WATT_REFERENCE,
    WATT_REFERENCE_X0,
    chua,
    double_integrator_control,
    watt,
)


def rk4(f, x0, t0, t1, h):
    """Classical fixed-step RK4, written out independently of the package."""
    n = int(round((t1 - t0) / h))
    x = np.array(x0, dtype=float)
    t = t0
    for _ in range(n):
        k1 = f(t, x)
        k2 = f(t + h / 2, x + h / 2 * k1)
        k3 = f(t + h / 2, x + h / 2 * k2)
        k4 = f(t + h, x + h * k3)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return x


@pytest.fixture(scope="module")
def governor():
    return watt(WATT_REFERENCE)


@pytest.fixture(scope="module")
def governor_run(governor):
    return integrate_filippov(governor, WATT_REFERENCE_X0, 0.0, 50.0)


# config ------------------------------------------------------------------

@pytest.mark.parametrize("kw", [{"rel_tol": 0}, {"abs_tol": -1}, {"event_tol": 1.0, "max_step": 0.1},
                                {"max_events": 0}, {"sample_dt": 0.0}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)


# smooth reference --------------------------------------------------------

def test_decay_closed_form():
    tr = integrate_smooth(lambda t, x: -x, [1.0], 0.0, 1.0)
    assert tr.final_state[0] == pytest.approx(math.exp(-1), abs=1e-8)


def test_zero_field_constant():
    tr = integrate_smooth(lambda t, x: np.zeros(2), [0.3, -2.0], 0.0, 5.0)
    assert np.all(tr.x == np.array([0.3, -2.0]))


def test_chua_branch_against_rk4():
    sys = chua(HIDDEN_CHUA)
    tr = integrate_smooth(sys.f_plus, [1.0, 0.0, 0.0], 0.0, 1.0, SolverConfig(rel_tol=1e-11, abs_tol=1e-13))
    coarse = rk4(sys.f_plus, [1.0, 0.0, 0.0], 0.0, 1.0, 1e-3)
    fine = rk4(sys.f_plus, [1.0, 0.0, 0.0], 0.0, 1.0, 5e-4)
    assert np.max(np.abs(coarse - fine)) < 1e-8
    assert np.max(np.abs(tr.final_state - fine)) < 1e-6


def test_dense_output_matches_samples():
    tr = integrate_smooth(lambda t, x: np.array([x[1], -x[0]]), [1.0, 0.0], 0.0, 3.0)
    for t, x in zip(tr.t[::7], tr.x[::7]):
        np.testing.assert_allclose(tr.dense(t), x, atol=1e-12)
    assert tr.dense(2.0)[0] == pytest.approx(math.cos(2.0), abs=1e-7)


def test_sampling_grid():
    tr = integrate_smooth(lambda t, x: -x, [1.0], 0.0, 1.0, SolverConfig(sample_dt=0.25))
    np.testing.assert_allclose(tr.t, [0, 0.25, 0.5, 0.75, 1.0])


def test_blow_up_reports_failure():
    with pytest.raises(IntegrationError) as info:
        integrate_smooth(lambda t, x: x * x, [1.0], 0.0, 2.0)
    err = info.value
    assert err.t < 1.0 + 1e-6
    assert err.partial is not None and len(err.partial) >= 1


def test_halving_tolerances(governor):
    coarse = SolverConfig(rel_tol=1e-7, abs_tol=1e-9)
    fine = SolverConfig(rel_tol=5e-8, abs_tol=5e-10)
    a = integrate_filippov(governor, WATT_REFERENCE_X0, 0.0, 10.0, coarse).final_state
    b = integrate_filippov(governor, WATT_REFERENCE_X0, 0.0, 10.0, fine).final_state
    assert np.max(np.abs(a - b)) < 10 * (1e-7 * np.max(np.abs(a)) + 1e-9)


# event location ----------------------------------------------------------

def test_linear_root():
    hit = locate_event(lambda t: t - 0.3, 0.0, 1.0, event_tol=1e-12)
    assert hit.t == pytest.approx(0.3, abs=1e-10) and not hit.grazing


def test_decreasing_root():
    hit = locate_event(lambda t: 0.7 - t, 0.0, 1.0, event_tol=1e-12)
    assert hit.t == pytest.approx(0.7, abs=1e-10)


def test_grazing_flagged():
    hit = locate_event(lambda t: (t - 0.5) ** 2 - 1e-20, 0.0, 1.0)
    assert hit is not None and hit.grazing
    assert hit.t == pytest.approx(0.5, abs=1e-4)


def test_no_event():
    assert locate_event(lambda t: 1.0 + t, 0.0, 1.0) is None


def test_first_crossing_against_scan(governor, governor_run):
    ref = integrate_smooth(governor.f_minus, WATT_REFERENCE_X0, 0.0, 1.0, SolverConfig(rel_tol=1e-12, abs_tol=1e-14))
    ts = np.linspace(0.0, 1.0, 10 ** 6 + 1)
    y1 = ref.dense(ts)[0]
    k = np.argmax(y1 > 0)
    assert k > 0
    first = governor_run.events[0]
    assert first.kind is EventKind.CROSSING
    assert abs(first.t - ts[k]) <= 1e-6


# Filippov / GLY runs -----------------------------------------------------

def test_empty_horizon(governor):
    tr = integrate_filippov(governor, WATT_REFERENCE_X0, 2.0, 2.0)
    assert len(tr) == 1 and tr.t[0] == 2.0 and not tr.events


def test_governor_reaches_sliding(governor_run):
    kinds = [e.kind for e in governor_run.events]
    assert EventKind.SLIDING_ENTRY in kinds
    assert governor_run.modes[-1] is Mode.SLIDING
    assert abs(governor_run.final_state[0]) <= 1e-6


def test_event_states_on_surface(governor, governor_run):
    on_tol = governor.surface.on_tol
    for e in governor_run.events:
        assert abs(e.state[0]) <= on_tol


def test_sliding_samples_projected(governor, governor_run):
    cfg = SolverConfig()
    for t, x, m in governor_run.samples:
        if m is Mode.SLIDING:
            assert abs(x[0]) <= cfg.sliding_proj_tol
            _, alpha = filippov_sliding_field(governor, t, x)
            assert -1e-9 <= alpha <= 1 + 1e-9


def test_mode_after_crossing(governor, governor_run):
    gap = SolverConfig().min_event_gap
    tr = governor_run
    for e in tr.events_of(EventKind.CROSSING):
        after = tr.interpolate([e.t + 1e3 * gap])[0]
        k = np.searchsorted(tr.t, e.t, side="right")
        expect = Mode.FLIGHT_PLUS if after[0] > 0 else Mode.FLIGHT_MINUS
        assert tr.modes[k] is expect


def test_modes_change_only_at_events(governor_run):
    tr = governor_run
    event_times = {e.t for e in tr.events}
    for k in range(1, len(tr)):
        if tr.modes[k] is not tr.modes[k - 1]:
            assert tr.t[k - 1] in event_times or tr.t[k] in event_times


def test_double_integrator_stands_still():
    sys = double_integrator_control()
    x0 = np.array([0.5, 1.0])
    tr = integrate_filippov(sys, x0, 0.0, 5.0)
    assert all(m is Mode.SLIDING for m in tr.modes)
    assert np.max(np.abs(tr.x - x0)) <= 1e-12


def test_surface_free_run_matches_branch():
    # plus side stays plus: sigma = x1 with x1' = 1 > 0
    fp = lambda t, x: np.array([1.0, -x[1]])
    fm = lambda t, x: np.array([-1.0, x[1]])
    sys = PiecewiseSystem(fp, fm, SwitchingSurface(lambda t, x: x[0], lambda t, x: np.array([1.0, 0.0])), 2)
    cfg = SolverConfig()
    a = integrate_filippov(sys, [0.5, 1.0], 0.0, 3.0, cfg)
    b = integrate_smooth(fp, [0.5, 1.0], 0.0, 3.0, cfg)
    assert not a.events
    assert np.max(np.abs(a.final_state - b.final_state)) <= 10 * (cfg.rel_tol + cfg.abs_tol)
    assert a.final_state[1] == pytest.approx(math.exp(-3.0), rel=1e-7)


def test_grazing_keeps_side():
    # x1 = -0.5 + t - t^2/2 touches zero at t = 1 from below
    f = lambda t, x: np.array([x[1], -1.0])
    g = lambda t, x: np.array([x[1], -1.0])
    sys = PiecewiseSystem(f, g, SwitchingSurface(lambda t, x: x[0], lambda t, x: np.array([1.0, 0.0])), 2)
    tr = integrate_filippov(sys, [-0.5, 1.0], 0.0, 2.0)
    assert not tr.events_of(EventKind.CROSSING)
    assert not tr.events_of(EventKind.SLIDING_ENTRY)
    assert all(m is Mode.FLIGHT_MINUS for m in tr.modes)
    assert tr.final_state[0] == pytest.approx(-0.5, abs=1e-8)


def test_chattering_guard(governor):
    cfg = SolverConfig(max_events=3)
    with pytest.raises(ChatteringError) as info:
        integrate_filippov(governor, WATT_REFERENCE_X0, 0.0, 50.0, cfg)
    assert info.value.partial is not None


def test_unknown_definition(governor):
    with pytest.raises(ValueError):
        integrate_filippov(governor, WATT_REFERENCE_X0, 0.0, 1.0, definition="hull")


def test_gly_matches_filippov_for_hull_sets(governor):
    a = integrate_filippov(governor, WATT_REFERENCE_X0, 0.0, 20.0)
    b = integrate_filippov(governor, WATT_REFERENCE_X0, 0.0, 20.0, definition="gly")
    assert np.max(np.abs(a.final_state - b.final_state)) < 1e-6


# regularization ----------------------------------------------------------

def test_sat_values():
    assert sat(0.0, 0.3) == 0.0
    assert sat(0.05, 0.1) == pytest.approx(0.5)
    assert sat(0.2, 0.1) == 1.0
    assert sat(-0.2, 0.1) == -1.0
    np.testing.assert_allclose(sat(np.array([-1.0, 0.0, 0.01]), 0.02), [-1.0, 0.0, 0.5])


@given(st.floats(-1e6, 1e6), st.floats(1e-6, 1e3))
def test_sat_odd_and_bounded(x, eps):
    assert sat(-x, eps) == -sat(x, eps)
    assert -1.0 <= sat(x, eps) <= 1.0


def test_sat_rejects_bad_width():
    with pytest.raises(ValueError):
        sat(1.0, 0.0)


def test_regularized_outside_band():
    sys = chua(HIDDEN_CHUA)
    x = np.array([0.02, 0.3, -0.1])
    np.testing.assert_array_equal(regularized_system(sys, 0.01)(0.0, x), sys.f_plus(0.0, x))


def test_regularized_on_surface():
    sys = chua(HIDDEN_CHUA)
    x = np.array([0.0, 0.3, -0.1])
    np.testing.assert_allclose(regularized_system(sys, 0.01)(0.0, x), sys.channel.smooth(0.0, x))


def test_regularized_half_band(governor):
    eps = 0.01
    x = np.array([eps / 2, 0.2, 0.0])
    v = regularized_system(governor, eps)(0.0, x)
    assert v[0] == pytest.approx(-1.5 * eps / 2 + 0.2 - 0.5)


def test_no_channel():
    sys = PiecewiseSystem(lambda t, x: x, lambda t, x: -x,
                          SwitchingSurface(lambda t, x: x[0], lambda t, x: np.array([1.0, 0.0])), 2)
    with pytest.raises(UnsupportedModelError):
        regularized_system(sys, 0.1)


@pytest.mark.parametrize("sched", [[], [1e-2, 1e-2], [1e-3, 1e-2], [1e-2, -1e-3]])
def test_schedule_validation(governor, sched):
    with pytest.raises(ValueError):
        integrate_ap(governor, WATT_REFERENCE_X0, 0.0, 1.0, sched)


def test_ap_runs_equal_direct_regularized():
    sys = chua(HIDDEN_CHUA)
    cfg = SolverConfig()
    x0 = [1.0, 0.0, 0.0]
    res = integrate_ap(sys, x0, 0.0, 5.0, [1e-2, 1e-3], cfg)
    for e, tr in zip(res.eps, res.trajectories):
        ref = integrate_smooth(regularized_system(sys, e), x0, 0.0, 5.0, cfg)
        assert np.max(np.abs(tr.final_state - ref.final_state)) <= 10 * (cfg.rel_tol * 10 + cfg.abs_tol)


def test_ap_band_free_runs_coincide():
    # x1 stays above 1, far outside every band
    fp = lambda t, x: np.array([0.0, -x[1]])
    sys = PiecewiseSystem(fp, lambda t, x: np.array([0.0, x[1]]),
                          SwitchingSurface(lambda t, x: x[0], lambda t, x: np.array([1.0, 0.0])), 2,
                          channel=SignChannel(lambda t, x: np.zeros(2), lambda t, x: np.array([0.0, -x[1]])))
    res = integrate_ap(sys, [2.0, 1.0], 0.0, 4.0, [1e-1, 1e-2, 1e-3])
    ref = integrate_filippov(sys, [2.0, 1.0], 0.0, 4.0)
    for tr in res.trajectories:
        assert trajectory_distance(tr, ref, 0.01) <= 1e-7
    assert all(d <= 1e-12 for d in res.distances)


def test_ap_continuation_chains_states():
    sys = chua(HIDDEN_CHUA)
    res = integrate_ap(sys, [1e-3, 0, 0], 0.0, 2.0, [1.0, 0.5], continuation=True)
    np.testing.assert_array_equal(res.trajectories[1].x[0], res.trajectories[0].final_state)


@pytest.fixture(scope="module")
def governor_ap(governor):
    return integrate_ap(governor, WATT_REFERENCE_X0, 0.0, 50.0, [1e-3, 1e-4])


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="band error after 45 time units of sliding is about 32*eps, "
                                       "3.2e-3 at eps=1e-4; an independent stiff solver agrees")
def test_governor_ap_terminal_state(governor_ap, governor_run):
    final = governor_ap.trajectories[1].final_state
    assert np.linalg.norm(final - governor_run.final_state) <= 1e-3


@pytest.mark.slow
def test_governor_ap_first_order(governor_ap, governor_run):
    d = [np.linalg.norm(tr.final_state - governor_run.final_state) for tr in governor_ap.trajectories]
    assert d[1] < d[0]
    assert d[0] / d[1] == pytest.approx(10.0, rel=0.05)
    # frozen from the same runs repeated with scipy's Radau on the saturated field
    assert d[1] == pytest.approx(3.2423e-3, rel=1e-3)


# distances ---------------------------------------------------------------

def _const(t0, t1, x):
    return Trajectory(np.array([t0, t1]), np.array([x, x]), (Mode.FLIGHT_PLUS,) * 2)


def test_distance_identical(governor_run):
    assert trajectory_distance(governor_run, governor_run, 0.1) == 0.0


def test_distance_constant():
    assert trajectory_distance(_const(0, 1, [0.0, 0.0]), _const(0, 1, [3.0, 4.0]), 0.1) == pytest.approx(5.0)


def test_distance_disjoint():
    with pytest.raises(ValueError):
        trajectory_distance(_const(0, 1, [0.0]), _const(2, 3, [0.0]), 0.1)


def test_distance_grid_refinement(governor):
    cfg = SolverConfig(sample_dt=1e-3)
    a = integrate_filippov(governor, WATT_REFERENCE_X0, 0.0, 10.0, cfg)
    b = integrate_ap(governor, WATT_REFERENCE_X0, 0.0, 10.0, [1e-3], cfg).trajectories[0]
    coarse = trajectory_distance(a, b, 1e-2)
    fine = trajectory_distance(a, b, 1e-4)
    assert coarse == pytest.approx(fine, rel=0.05)


# naive witness -----------------------------------------------------------

def test_naive_solver_chatters(governor):
    tr = integrate_naive(governor, WATT_REFERENCE_X0, 0.0, 50.0, 0.1)
    late = tr.window(40.0, 50.0)
    assert np.ptp(late.x[:, 0]) >= 1e-2
