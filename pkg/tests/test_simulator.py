import math

import numpy as np
import pytest

from dsdm import model
from dsdm.controller import ControllerConfig, Phase, parse_schedule
from dsdm.environment import CompliantLoad, ContactKind, FixedObstacle, Free, InertialLoad
from dsdm.model import HybridState, InvalidTransition, Mode, TorqueInput
from dsdm.simulator import (
    HybridPlant,
    SimConfig,
    TraceRecord,
    TransitionKind,
    apply_transition,
    compute_metrics,
    integrate_step,
    locate_event,
    rk4_step,
    run_scenario,
)

HS, HF = Mode.HS, Mode.HF


@pytest.fixture(scope="module")
def stiff_frictionless(fitted):
    return fitted.with_(b_o=0.0, b_1=0.0, b_2=0.0)


# --- config


@pytest.mark.parametrize(
    "kw", [{"dt": 0.0}, {"dt": 2e-3}, {"event_tol": 1e-4}, {"duration": -1.0}, {"encoder_quantization": -1.0}]
)
def test_sim_config_rejects(kw):
    with pytest.raises(ValueError):
        SimConfig(**kw)


def test_n_steps():
    assert SimConfig(dt=1e-4, duration=0.3).n_steps == 3000


# --- integration


def test_rest_is_fixed_point(fitted):
    for s in (HybridState(HS), HybridState(HF)):
        assert integrate_step(fitted, s, TorqueInput(), Free(), 1e-4) == s


def test_hf_constant_torque_is_exact(stiff_frictionless):
    p, dt = stiff_frictionless, 1e-4
    s = HybridState(HF)
    u = TorqueInput(tau_2=0.02954)
    for _ in range(1000):
        s = integrate_step(p, s, u, Free(), dt)
    a = 474 * 0.02954 / 0.22
    assert s.w_o == pytest.approx(a * 0.1, rel=1e-10)
    assert s.theta_o == pytest.approx(0.5 * a * 0.01, rel=1e-10)
    assert a == pytest.approx(63.65, abs=0.01)


def _spring_run(p, dt, T=0.01):
    load = CompliantLoad(k_c=50.0, b_c=0.0, contact_angle=1.0)
    s = HybridState(HS, 1.1, 0.0, 0.0)
    for _ in range(int(round(T / dt))):
        s = integrate_step(p, s, TorqueInput(tau_1=0.01), load, dt)
    return np.array([s.theta_o, s.w_o, s.w_1])


def test_fourth_order_convergence(fitted):
    y1, y2, y4 = (_spring_run(fitted, dt) for dt in (5e-4, 2.5e-4, 1.25e-4))
    ratio = np.linalg.norm(y1 - y2) / np.linalg.norm(y2 - y4)
    assert ratio == pytest.approx(16.0, rel=0.1)


def test_rk4_on_exponential():
    y = rk4_step(lambda y: -y, np.array([1.0]), 0.1)
    taylor = sum((-0.1) ** k / math.factorial(k) for k in range(5))
    assert y[0] == pytest.approx(taylor, abs=1e-15)


def test_locate_event():
    tol = 1e-7
    assert locate_event(lambda t: t - 0.5, 0.0, 1.0, tol) == pytest.approx(0.5, abs=tol)
    assert locate_event(lambda t: t + 1.0, 0.0, 1.0, tol) is None
    assert locate_event(lambda t: t, 0.0, 1.0, tol) == 0.0
    assert locate_event(lambda t: t - 1.0, 0.0, 1.0, tol) == 1.0
    t = locate_event(lambda t: 1.0 - 3 * t, 0.0, 1.0, tol)
    assert 1 / 3 <= t <= 1 / 3 + tol


# --- transitions


def test_apply_transition_dispatch(fitted):
    s, ev = apply_transition(fitted, HybridState(HF, 0.0, 5.0), TransitionKind.UPSHIFT, t=0.2)
    assert s == model.jump_upshift(HybridState(HF, 0.0, 5.0))
    assert (ev.time, ev.kind, ev.transition) == (0.2, ContactKind.RELEASE, "upshift")

    hs = HybridState(HS, 0.0, 3.0, 40.0)
    s, ev = apply_transition(fitted, hs, "impact_hs", p_o=-0.01)
    assert s == model.jump_impact_hs(fitted, hs, -0.01)
    assert ev.impulse == -0.01 and ev.kind is ContactKind.IMPACT


def test_apply_transition_impact_via_impulse(fitted):
    from dsdm.environment import impact_impulse

    hs = HybridState(HS, 0.3, 3.0, 40.0)
    p_o = impact_impulse(fitted, HS, FixedObstacle(), hs.w_o)
    s, _ = apply_transition(fitted, hs, TransitionKind.IMPACT_HS, p_o)
    assert fitted.mass_matrix() @ (s.w - hs.w) == pytest.approx([p_o, 0.0], abs=1e-12)
    assert s.w_o == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize(
    "kind, mode",
    [("upshift", HS), ("downshift", HF), ("impact_hs", HF), ("impact_hf", HS)],
)
def test_apply_transition_rejects_wrong_mode(fitted, kind, mode):
    with pytest.raises(InvalidTransition):
        apply_transition(fitted, HybridState(mode), kind)


@pytest.mark.parametrize("w_1", [0.49, -0.49, 0.2])
def test_smooth_downshift_bound(fitted, w_1):
    s, _ = apply_transition(fitted, HybridState(HS, 0.0, 2.0, w_1), TransitionKind.DOWNSHIFT)
    assert abs(s.w_o - 2.0) <= 0.5 / 23.37
    assert abs(s.w_o - 2.0) == pytest.approx(abs(w_1) / 23.370806, rel=1e-6)


def test_constraint_toggles(fitted):
    s, ev = apply_transition(fitted, HybridState(HS, 0.3, 1.0, 2.0), TransitionKind.CONSTRAINT_ACTIVATE)
    assert (s.w_o, s.w_1) == (0.0, 2.0) and ev.kind is ContactKind.ENGAGE
    s2, ev = apply_transition(fitted, s, TransitionKind.CONSTRAINT_RELEASE)
    assert s2 == s and ev.kind is ContactKind.RELEASE


# --- plant


def test_plant_rejects_start_inside_load(fitted):
    with pytest.raises(ValueError):
        HybridPlant(fitted, FixedObstacle(0.3), HybridState(HS, 0.5))


def test_plant_impact_located_in_step(stiff_frictionless):
    p = stiff_frictionless
    plant = HybridPlant(p, FixedObstacle(0.3), HybridState(HF, 0.3 - 0.5e-4, 1.0))
    plant.advance(TorqueInput(), 1e-4)
    assert plant.s.theta_o == 0.3 and plant.s.w_o == 0.0
    ev = [e for e in plant.events if e.kind is ContactKind.IMPACT]
    assert len(ev) == 1
    assert ev[0].time == pytest.approx(0.5e-4, abs=1e-7)
    assert ev[0].impulse == pytest.approx(-0.22, rel=1e-9)


def test_plant_inertial_load_pushed(fitted):
    load = InertialLoad(I_L=0.5, resistive_torque=0.0, contact_angle=0.3)
    p = fitted.with_(b_o=0.0, b_1=0.0, b_2=0.0)
    plant = HybridPlant(p, load, HybridState(HF, 0.3 - 0.5e-4, 1.0))
    plant.advance(TorqueInput(), 1e-4)
    assert plant.s.w_o == pytest.approx(0.22 / 0.72, rel=1e-9)


def test_plant_brake_delay(fitted):
    plant = HybridPlant(fitted, Free(), HybridState(HS, 0.0, 1.0, 0.0))
    plant.set_brake(True)
    assert plant.s.mode is HS
    plant.brake_hold = fitted.brake_delay
    plant.set_brake(True)
    assert plant.s.mode is HF
    plant.set_brake(False)
    assert plant.s.mode is HS and plant.s.w_1 == 0.0


# --- closed loop


def _sim(p, load, cfg, duration, state=None, dt=1e-4):
    return run_scenario(p, load, cfg, SimConfig(dt=dt, duration=duration), state)


def test_zero_duration(fitted):
    res = _sim(fitted, Free(), ControllerConfig(), 0.0)
    assert res.trace == [] and res.metrics is None


def test_hybrid_closed_form_hs(stiff_frictionless):
    """HS free flight, impact on a fixed stop, down-shift, then HF motion back onto the stop.

    M1 is still spinning slightly forward when the brake bites, so the
    down-shift kicks the output off the stop; under constant M2 torque it
    then follows a parabola until it meets the stop again.
    """
    p = stiff_frictionless
    c, tau_d = 0.3, 0.08
    res = _sim(p, FixedObstacle(c), ControllerConfig(tau_d=tau_d), 0.12)
    a_hs = p.R1 * tau_d / model.io_inertia_hs(p)
    t_hit = math.sqrt(2 * c / a_hs)
    hit = [e for e in res.events if e.kind is ContactKind.IMPACT]
    assert hit[0].time == pytest.approx(t_hit, abs=2e-7)

    first_hf = next(r for r in res.trace if r.mode is HF)
    t_d, v0 = first_hf.t, first_hf.w_o
    assert -0.5 / 23.37 <= v0 < 0.0
    a_hf = p.R2 * p.tau2_max / p.hf_reflected_inertia
    t_back = t_d - 2 * v0 / a_hf

    for r in res.trace:
        if r.t < t_hit:
            assert r.w_o == pytest.approx(a_hs * r.t, rel=1e-6, abs=1e-12)
            assert r.theta_o == pytest.approx(0.5 * a_hs * r.t**2, rel=1e-6, abs=1e-12)
        elif r.t < t_d:
            assert r.mode is HS and (r.w_o, r.theta_o) == (0.0, c)
            assert r.tau_o <= 0.0
        elif r.t < t_back:
            tt = r.t - t_d
            assert r.w_o == pytest.approx(v0 + a_hf * tt, rel=1e-6, abs=1e-12)
            assert r.theta_o - c == pytest.approx(v0 * tt + 0.5 * a_hf * tt**2, rel=1e-6, abs=1e-12)
        else:
            assert (r.w_o, r.theta_o) == (0.0, c)
            assert r.tau_o == pytest.approx(-p.R2 * p.tau2_max, rel=1e-12)
    assert res.trace[-1].ctrl_phase is Phase.STEADY_HF
    again = [e for e in res.events if e.kind is ContactKind.IMPACT and e.time > t_d]
    assert again[0].time == pytest.approx(t_back, abs=1e-6)
    # bisection stops up to event_tol past the crossing
    assert again[0].impulse == pytest.approx(-0.22 * (-v0), abs=0.22 * a_hf * 1e-7)


def test_hybrid_closed_form_hf(stiff_frictionless):
    p = stiff_frictionless.with_(w_o_max_hf=math.inf)
    c, tau_d = 0.3, 0.02
    cfg = ControllerConfig(tau_d=tau_d, k_d_schedule=parse_schedule("0:HF"))
    res = _sim(p, FixedObstacle(c), cfg, 0.2, HybridState(HF))
    a = p.R2 * tau_d / p.hf_reflected_inertia
    t_hit = math.sqrt(2 * c / a)
    for r in res.trace:
        if r.t < t_hit:
            assert r.w_o == pytest.approx(a * r.t, rel=1e-6, abs=1e-12)
            assert r.theta_o == pytest.approx(0.5 * a * r.t**2, rel=1e-6, abs=1e-12)
        else:
            assert (r.w_o, r.theta_o) == (0.0, c)
            assert r.tau_o == pytest.approx(-p.R2 * tau_d, rel=1e-12)
    ev = next(e for e in res.events if e.kind is ContactKind.IMPACT)
    assert ev.impulse == pytest.approx(-0.22 * a * t_hit, rel=1e-6)


@pytest.fixture(scope="module")
def fixed_run(fitted):
    return _sim(fitted, FixedObstacle(0.3), ControllerConfig(), 0.3)


def test_non_penetration(fixed_run):
    for r in fixed_run.trace:
        assert r.theta_o <= 0.3 + abs(r.w_o) * 1e-4 + 1e-12
        if r.contact_active:
            assert r.tau_o <= 0.0  # the stop only pushes back


def test_trace_invariants(fitted, fixed_run):
    trace = fixed_run.trace
    for r in trace:
        s = HybridState(r.mode, r.theta_o, r.w_o, r.w_1)
        assert r.w_2 == pytest.approx(model.w2_from_state(fitted, s), abs=1e-12)
        if r.mode is HF:
            assert r.w_1 == 0.0 and r.brake_engaged
    shifts = [
        (a.t, b.t) for a, b in zip(trace, trace[1:]) if a.mode is not b.mode
    ]
    assert shifts
    logged = [e.time for e in fixed_run.events if e.transition in ("downshift", "upshift")]
    for t0, t1 in shifts:
        assert any(t0 - 1e-12 <= t <= t1 + 1e-12 for t in logged)


def test_determinism(fitted):
    a = _sim(fitted, InertialLoad(), ControllerConfig(), 0.1)
    b = _sim(fitted, InertialLoad(), ControllerConfig(), 0.1)
    assert a.trace == b.trace and a.events == b.events


def test_free_load_equilibrium(fitted):
    p = fitted.with_(b_o=0.1, b_1=0.0, b_2=0.0)
    tau_d = 0.05
    res = _sim(p, Free(), ControllerConfig(tau_d=tau_d), 1.0)
    w_end = res.trace[-1].w_o
    assert w_end == pytest.approx(p.R1 * tau_d / model.io_damping_hs(p), rel=1e-6)
    assert w_end == pytest.approx(p.R1 * tau_d / p.b_o, rel=3e-3)
    assert res.metrics.shift_latency is None


def test_compliant_load_no_impulse(fitted):
    res = _sim(fitted, CompliantLoad(), ControllerConfig(), 0.3)
    assert not [e for e in res.events if e.kind is ContactKind.IMPACT]
    assert res.trace[-1].ctrl_phase is Phase.STEADY_HF


def test_fine_encoder_still_shifts(fitted):
    exact = _sim(fitted, FixedObstacle(), ControllerConfig(), 0.1)
    res = run_scenario(
        fitted, FixedObstacle(), ControllerConfig(), SimConfig(duration=0.1, encoder_quantization=1e-6)
    )
    assert res.trace[-1].mode is HF
    assert res.metrics.shift_latency <= 0.030
    # quantisation only reaches the plant through nullspace torques, which
    # touch the output only through the tiny motor damping
    t_c = exact.metrics.contact_time
    a = [r.w_o for r in res.trace if r.t < t_c]
    b = [r.w_o for r in exact.trace if r.t < t_c]
    assert a == pytest.approx(b, rel=1e-6, abs=1e-9)


def test_coarse_encoder_false_triggers(fitted):
    # one quantum of speed per step reads as q/dt^2 = 1e4 rad/s^2 of deceleration,
    # far above the detection threshold, so the shift fires before contact
    res = run_scenario(
        fitted, FixedObstacle(), ControllerConfig(), SimConfig(duration=0.02, encoder_quantization=1e-4)
    )
    early = [r for r in res.trace if r.ctrl_phase is Phase.SYNCHRONIZING and not r.contact_active]
    assert early


# --- metrics


def _rec(t, w_o=0.0, phase=Phase.STEADY_HS, contact=False, mode=HS, tau_1=0.0, tau_2=0.0):
    return TraceRecord(t, mode, phase, 0.0, w_o, 0.0, 0.0, tau_1, tau_2, 0.0, mode is HF, contact)


def test_metrics_latency():
    tr = [_rec(0.0), _rec(0.1, contact=True), _rec(0.125, phase=Phase.STEADY_HF, contact=True, mode=HF)]
    m = compute_metrics(tr)
    assert m.shift_latency == pytest.approx(0.025)


def test_metrics_no_shift():
    m = compute_metrics([_rec(0.0), _rec(0.1, contact=True)])
    assert m.shift_latency is None
    assert compute_metrics([_rec(0.0)]).shift_latency is None


def test_metrics_dip_and_peak():
    tr = [_rec(0.0, 2.0, tau_1=0.05), _rec(0.1, 2.0), _rec(0.2, 2.0)]
    m = compute_metrics(tr)
    assert m.w_o_dip == 0.0
    assert m.peak_output_torque == pytest.approx(23 * 0.05)
    tr = [_rec(0.0, 1.0), _rec(0.1, 3.0), _rec(0.2, 0.5), _rec(0.3, 0.0, mode=HF, tau_2=0.02)]
    m = compute_metrics(tr)
    assert m.w_o_dip == pytest.approx(3.0)
    assert m.peak_output_torque == pytest.approx(474 * 0.02)
    assert m.downshift_w_o_jump == pytest.approx(-0.5)


def test_metrics_empty():
    with pytest.raises(ValueError):
        compute_metrics([])
