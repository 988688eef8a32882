"""Event-driven hybrid simulation of the actuator against an output load.

Fixed-step RK4 with zero-order-hold torques.  Contact crossings and
stick events are located inside a step by bisection; the jump is applied at
the located time and the rest of the step is integrated with the new
dynamics.  The controller runs once per step, at the step start.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import controller as ctl
from .controller import ControllerCommand, ControllerConfig, Phase
from .environment import (
    CompliantLoad,
    ContactEvent,
    ContactKind,
    FixedObstacle,
    Free,
    InertialLoad,
    LoadModel,
    detect_crossing,
    external_torque,
    impact_impulse,
)
from .model import (
    HybridState,
    InvalidTransition,
    Mode,
    TorqueInput,
    dynamics,
    jump_downshift,
    jump_impact_hf,
    jump_impact_hs,
    jump_upshift,
    w2_from_state,
)
from .params import ActuatorParams

CSV_COLUMNS = (
    "t",
    "mode",
    "ctrl_phase",
    "theta_o",
    "w_o",
    "w_1",
    "w_2",
    "tau_1",
    "tau_2",
    "tau_o",
    "brake_engaged",
    "contact_active",
)

MAX_EVENTS_PER_STEP = 16


class SimulationDiverged(RuntimeError):
    def __init__(self, message: str, last_record: Optional["TraceRecord"] = None):
        super().__init__(message)
        self.last_record = last_record


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-4
    duration: float = 0.3
    event_tol: float = 1e-7
    encoder_quantization: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.dt <= 1e-3):
            raise ValueError(f"dt must be in (0, 1e-3], got {self.dt}")
        if not (0.0 < self.event_tol < self.dt):
            raise ValueError("event_tol must be positive and smaller than dt")
        if not (self.duration >= 0.0 and math.isfinite(self.duration)):
            raise ValueError("duration must be non-negative")
        if not self.encoder_quantization >= 0.0:
            raise ValueError("encoder_quantization must be non-negative")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))


@dataclass(frozen=True)
class TraceRecord:
    t: float
    mode: Mode
    ctrl_phase: Phase
    theta_o: float
    w_o: float
    w_1: float
    w_2: float
    tau_1: float
    tau_2: float
    tau_o: float
    brake_engaged: bool
    contact_active: bool

    def csv_row(self) -> list[str]:
        def g(x):
            return f"{x:.9g}"

        return [
            g(self.t),
            self.mode.value,
            self.ctrl_phase.value,
            g(self.theta_o),
            g(self.w_o),
            g(self.w_1),
            g(self.w_2),
            g(self.tau_1),
            g(self.tau_2),
            g(self.tau_o),
            str(int(self.brake_engaged)),
            str(int(self.contact_active)),
        ]


# --- numerics -----------------------------------------------------------------


def rk4_step(f: Callable[[np.ndarray], np.ndarray], y: np.ndarray, h: float) -> np.ndarray:
    """Classical 4th-order Runge-Kutta step of an autonomous field."""
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def locate_event(
    predicate: Callable[[float], float], t0: float, t1: float, tol: float
) -> Optional[float]:
    """Bisect a sign change of ``predicate`` on ``[t0, t1]`` down to ``tol``.

    Returns the first time known to be at or past the crossing, ``t0`` if the
    predicate is already zero there, or ``None`` without a sign change.
    """
    g0 = predicate(t0)
    if g0 == 0.0:
        return t0
    g1 = predicate(t1)
    if g1 == 0.0:
        return t1
    if (g0 < 0.0) == (g1 < 0.0):
        return None
    a, b = t0, t1
    while b - a > tol:
        m = 0.5 * (a + b)
        gm = predicate(m)
        if gm == 0.0:
            return m
        if (gm < 0.0) == (g0 < 0.0):
            a = m
        else:
            b = m
    return b


def _pack(s: HybridState, theta_1: float) -> np.ndarray:
    return np.array([s.theta_o, s.w_o, s.w_1, theta_1])


def _field(p: ActuatorParams, mode: Mode, torques: TorqueInput, tau_o_of) -> Callable:
    def f(y):
        s = HybridState(mode, y[0], y[1], y[2] if mode is Mode.HS else 0.0)
        tau_o = torques.tau_o + tau_o_of(y[0], y[1])
        dw = dynamics(p, s, replace(torques, tau_o=tau_o))
        return np.array([y[1], dw[0], dw[1], y[2]])

    return f


def integrate_step(
    p: ActuatorParams, s: HybridState, torques: TorqueInput, load: LoadModel, dt: float
) -> HybridState:
    """Advance the active mode's dynamics by ``dt`` with the load torque in every stage.

    No event handling: callers that care about contact crossings use
    :class:`HybridPlant`.
    """
    f = _field(p, s.mode, torques, lambda th, w: external_torque(load, th, w))
    y = rk4_step(f, _pack(s, 0.0), dt)
    if not np.all(np.isfinite(y)):
        raise SimulationDiverged(f"non-finite state after step from {s}")
    return HybridState(s.mode, float(y[0]), float(y[1]), float(y[2]) if s.mode is Mode.HS else 0.0)


# --- transitions --------------------------------------------------------------


class TransitionKind(str, enum.Enum):
    UPSHIFT = "upshift"
    DOWNSHIFT = "downshift"
    IMPACT_HS = "impact_hs"
    IMPACT_HF = "impact_hf"
    CONSTRAINT_ACTIVATE = "constraint_activate"
    CONSTRAINT_RELEASE = "constraint_release"


def apply_transition(
    p: ActuatorParams,
    s: HybridState,
    kind: TransitionKind,
    p_o: float = 0.0,
    t: float = 0.0,
) -> tuple[HybridState, ContactEvent]:
    """Apply one discrete transition and describe it as a logged event."""
    kind = TransitionKind(kind)
    if kind is TransitionKind.UPSHIFT:
        return jump_upshift(s), ContactEvent(t, 0.0, ContactKind.RELEASE, kind.value)
    if kind is TransitionKind.DOWNSHIFT:
        return jump_downshift(p, s), ContactEvent(t, 0.0, ContactKind.ENGAGE, kind.value)
    if kind is TransitionKind.IMPACT_HS:
        return jump_impact_hs(p, s, p_o), ContactEvent(t, p_o, ContactKind.IMPACT, kind.value)
    if kind is TransitionKind.IMPACT_HF:
        return jump_impact_hf(p, s, p_o), ContactEvent(t, p_o, ContactKind.IMPACT, kind.value)
    if kind is TransitionKind.CONSTRAINT_ACTIVATE:
        return s.with_velocities(0.0, s.w_1), ContactEvent(t, 0.0, ContactKind.ENGAGE, kind.value)
    return s, ContactEvent(t, 0.0, ContactKind.RELEASE, kind.value)


# --- plant ----------------------------------------------------------------------


class Contact(str, enum.Enum):
    NONE = "none"
    SPRING = "spring"  # compliant load compressed
    ATTACHED = "attached"  # inertial load riding along, w_o > 0
    LOCKED = "locked"  # w_o held at 0: fixed obstacle or stuck inertial load


class HybridPlant:
    """Physical truth: actuator state, brake, and contact with one load.

    The inertial load's position is tracked so that, once pushed and left
    behind, it is met again where it was dropped.
    """

    def __init__(
        self,
        p: ActuatorParams,
        load: LoadModel,
        state: Optional[HybridState] = None,
        event_tol: float = 1e-7,
    ):
        self.p = p
        self.load = load
        self.s = state or HybridState(Mode.HS)
        self.theta_1 = 0.0
        self.t = 0.0
        self.event_tol = event_tol
        self.contact = Contact.NONE
        self.events: list[ContactEvent] = []
        self.brake_hold = 0.0
        if not isinstance(load, Free) and self.s.theta_o > load.contact_angle:
            raise ValueError("initial output position is inside the load")
        self._p_attached = (
            p.with_(I_o=p.I_o + load.I_L) if isinstance(load, InertialLoad) else p
        )

    # -- helpers

    @property
    def p_eff(self) -> ActuatorParams:
        return self._p_attached if self.contact is Contact.ATTACHED else self.p

    @property
    def contact_active(self) -> bool:
        return self.contact is not Contact.NONE

    def _log(self, ev: ContactEvent):
        self.events.append(ev)

    def _transition(self, kind: TransitionKind, p_o: float = 0.0, p=None):
        self.s, ev = apply_transition(p or self.p_eff, self.s, kind, p_o, self.t)
        self._log(ev)

    def locked_reaction(self, torques: TorqueInput) -> float:
        """Output torque the hold must supply to keep ``w_o = 0``."""
        p, s = self.p, self.s
        if s.mode is Mode.HF:
            return -p.R2 * torques.tau_2 - torques.tau_o
        H, D, B = p.mass_matrix(), p.damping_matrix(), p.input_matrix()
        gen = B @ np.array([torques.tau_1, torques.tau_2, torques.tau_o])
        dw1 = (gen[1] - D[1, 1] * s.w_1) / H[1, 1]
        return H[0, 1] * dw1 + D[0, 1] * s.w_1 - gen[0]

    def _locked_field(self, torques: TorqueInput):
        p, mode = self.p, self.s.mode
        H, D, B = p.mass_matrix(), p.damping_matrix(), p.input_matrix()
        g1 = float(B[1] @ np.array([torques.tau_1, torques.tau_2, torques.tau_o]))

        def f(y):
            dw1 = (g1 - D[1, 1] * y[2]) / H[1, 1] if mode is Mode.HS else 0.0
            return np.array([0.0, 0.0, dw1, y[2]])

        return f

    def _vector_field(self, torques: TorqueInput):
        mode = self.s.mode
        if self.contact is Contact.LOCKED:
            return self._locked_field(torques)
        if self.contact is Contact.SPRING:
            load = self.load
            return _field(self.p, mode, torques, lambda th, w: external_torque(load, th, w))
        if self.contact is Contact.ATTACHED:
            friction = -self.load.resistive_torque
            return _field(self.p_eff, mode, torques, lambda th, w: friction)
        return _field(self.p, mode, torques, lambda th, w: 0.0)

    def external_torque_now(self, torques: TorqueInput) -> float:
        if self.contact is Contact.LOCKED:
            return self.locked_reaction(torques)
        if self.contact is Contact.SPRING:
            return external_torque(self.load, self.s.theta_o, self.s.w_o)
        if self.contact is Contact.ATTACHED:
            return -self.load.resistive_torque
        return 0.0

    def _set_y(self, y: np.ndarray):
        w_1 = float(y[2]) if self.s.mode is Mode.HS else 0.0
        self.s = HybridState(self.s.mode, float(y[0]), float(y[1]), w_1)
        self.theta_1 = float(y[3])

    # -- discrete updates

    def set_brake(self, closed: bool):
        """Feed the brake command for the coming step.

        The brake bites once the close command has been held ``brake_delay``;
        opening is immediate.  Call before :meth:`advance`.
        """
        if closed and self.s.mode is Mode.HS:
            if ctl.brake_delay_elapsed(self.brake_hold, self.p.brake_delay):
                self._downshift()
                self.brake_hold = 0.0
        elif not closed and self.s.mode is Mode.HF:
            self._transition(TransitionKind.UPSHIFT)
        if not (closed and self.s.mode is Mode.HS):
            self.brake_hold = 0.0

    def _downshift(self):
        self._transition(TransitionKind.DOWNSHIFT)
        if self.contact is Contact.LOCKED:
            if self.s.w_o > 0.0:
                self.s = self.s.with_velocities(0.0, 0.0)  # absorbed by the hold
            elif self.s.w_o < 0.0:
                self._release()

    def _release(self):
        if isinstance(self.load, InertialLoad):
            # the load stays where it was left
            self.load = replace(self.load, contact_angle=self.s.theta_o)
        self.contact = Contact.NONE
        self._transition(TransitionKind.CONSTRAINT_RELEASE)

    def settle_contact(self, torques: TorqueInput):
        """Release or slip a held output if the coming step's torques demand it."""
        if self.contact is Contact.LOCKED:
            r = self.locked_reaction(torques)
            if r > 0.0 and isinstance(self.load, FixedObstacle):
                self._release()
            elif isinstance(self.load, InertialLoad):
                if r > self.load.resistive_torque:
                    self._release()
                elif r < -self.load.resistive_torque:
                    self.contact = Contact.ATTACHED
                    self._log(ContactEvent(self.t, 0.0, ContactKind.RELEASE, "slip"))
        elif self.contact is Contact.ATTACHED and self.s.w_o < 0.0:
            self._release()

    def _make_contact(self):
        load, s = self.load, self.s
        if isinstance(load, CompliantLoad):
            self.contact = Contact.SPRING
            self._log(ContactEvent(self.t, 0.0, ContactKind.ENGAGE, "contact"))
            return
        kind = TransitionKind.IMPACT_HS if s.mode is Mode.HS else TransitionKind.IMPACT_HF
        p_o = impact_impulse(self.p, s.mode, load, s.w_o)
        if p_o != 0.0:
            self._transition(kind, p_o, p=self.p)
        if isinstance(load, InertialLoad) and self.s.w_o > 0.0:
            self.contact = Contact.ATTACHED
            self._log(ContactEvent(self.t, 0.0, ContactKind.ENGAGE, "attach"))
        else:
            # hard stop at the contact angle; also where a slow load contact sticks
            self.s = replace(self.s, theta_o=load.contact_angle)
            self.contact = Contact.LOCKED
            self._transition(TransitionKind.CONSTRAINT_ACTIVATE)

    def _event_predicate(self, y0: np.ndarray, y1: np.ndarray):
        """Return ``(g, handler)`` if the trial step ends past an event surface."""
        if self.contact is Contact.NONE and not isinstance(self.load, Free):
            c = self.load.contact_angle
            frac = detect_crossing(self.load, y0[0], y1[0])
            if frac is not None and y1[0] >= c and (y0[0] < c or y1[0] > c):
                return (lambda y: y[0] - c), self._make_contact
        elif self.contact is Contact.SPRING and y1[0] < self.load.contact_angle:
            c = self.load.contact_angle

            def leave():
                self.contact = Contact.NONE
                self._log(ContactEvent(self.t, 0.0, ContactKind.RELEASE, "separate"))

            return (lambda y: y[0] - c), leave
        elif self.contact is Contact.ATTACHED and y1[1] <= 0.0:

            def stick():
                self.s = self.s.with_velocities(0.0, self.s.w_1)
                self.contact = Contact.LOCKED
                self._log(ContactEvent(self.t, 0.0, ContactKind.ENGAGE, "stick"))

            return (lambda y: y[1]), stick
        return None

    def advance(self, torques: TorqueInput, dt: float):
        """Integrate one step of length ``dt`` under constant torques."""
        self.settle_contact(torques)
        remaining, n_events = dt, 0
        while remaining > 0.0:
            y0 = _pack(self.s, self.theta_1)
            f = self._vector_field(torques)
            y1 = rk4_step(f, y0, remaining)
            hit = self._event_predicate(y0, y1) if n_events < MAX_EVENTS_PER_STEP else None
            if hit is None:
                self._set_y(y1)
                self.t += remaining
                break
            g, handler = hit
            tau = locate_event(lambda h: g(rk4_step(f, y0, h)), 0.0, remaining, self.event_tol)
            if tau is None:  # crossing vanished on refinement
                tau = remaining
            self._set_y(rk4_step(f, y0, tau))
            self.t += tau
            handler()
            n_events += 1
            remaining -= tau
        if not (math.isfinite(self.s.w_o) and math.isfinite(self.s.w_1) and math.isfinite(self.s.theta_o)):
            raise SimulationDiverged(f"non-finite state at t={self.t}")


# --- scenario loop --------------------------------------------------------------


@dataclass
class Metrics:
    shift_latency: Optional[float]
    w_o_dip: float
    downshift_w_o_jump: Optional[float]
    peak_output_torque: float
    time_in_sync: float
    contact_time: Optional[float]
    hf_time: Optional[float]

    def summary(self) -> dict:
        ms = lambda v: None if v is None else 1e3 * v
        return {
            "shift_latency_ms": ms(self.shift_latency),
            "w_o_dip": self.w_o_dip,
            "downshift_w_o_jump": self.downshift_w_o_jump,
            "peak_output_torque": self.peak_output_torque,
            "time_in_sync_ms": ms(self.time_in_sync),
        }


@dataclass
class SimulationResult:
    trace: list[TraceRecord]
    metrics: Optional[Metrics]
    events: list[ContactEvent] = field(default_factory=list)


def compute_metrics(trace: Sequence[TraceRecord], R1: float = 23.0, R2: float = 474.0) -> Metrics:
    """Summarise a trace.

    ``shift_latency`` runs from the first row in contact to the first
    steady-HF row after it.  ``w_o_dip`` is the largest drop of ``w_o`` below
    its running maximum.
    """
    if not trace:
        raise ValueError("empty trace")
    contact_time = next((r.t for r in trace if r.contact_active), None)
    hf_time = None
    if contact_time is not None:
        hf_time = next(
            (r.t for r in trace if r.t >= contact_time and r.ctrl_phase is Phase.STEADY_HF), None
        )
    latency = None if hf_time is None else hf_time - contact_time

    w = np.array([r.w_o for r in trace])
    dip = float(np.max(np.maximum.accumulate(w) - w))

    jump = None
    for a, b in zip(trace, trace[1:]):
        if a.mode is Mode.HS and b.mode is Mode.HF:
            jump = b.w_o - a.w_o
            break

    peak = max(abs(R1 * r.tau_1) if r.mode is Mode.HS else abs(R2 * r.tau_2) for r in trace)
    dt = trace[1].t - trace[0].t if len(trace) > 1 else 0.0
    sync = dt * sum(r.ctrl_phase is Phase.SYNCHRONIZING for r in trace)
    return Metrics(latency, dip, jump, peak, sync, contact_time, hf_time)


class _Encoder:
    """Quantised position readings differentiated into speeds."""

    def __init__(self, q: float, dt: float):
        self.q, self.dt = q, dt
        self.prev: Optional[tuple[float, float]] = None

    def read(self, plant: HybridPlant) -> tuple[float, float]:
        if self.q == 0.0:
            return plant.s.w_o, plant.s.w_1
        pos = (round(plant.s.theta_o / self.q) * self.q, round(plant.theta_1 / self.q) * self.q)
        prev = self.prev or pos
        self.prev = pos
        return (pos[0] - prev[0]) / self.dt, (pos[1] - prev[1]) / self.dt


def run_scenario(
    params: ActuatorParams,
    load: LoadModel,
    controller: ControllerConfig,
    sim: SimConfig,
    initial_state: Optional[HybridState] = None,
) -> SimulationResult:
    """Closed-loop run: controller -> saturation -> brake -> integration -> events."""
    plant = HybridPlant(params, load, initial_state, sim.event_tol)
    ctrl = controller.initial_state(plant.s.mode)
    enc = _Encoder(sim.encoder_quantization, sim.dt)
    dt = sim.dt
    trace: list[TraceRecord] = []
    last_w: Optional[float] = None
    contact_time: Optional[float] = None

    for k in range(sim.n_steps):
        t = k * dt
        plant.t = t
        w_o_m, w_1_m = enc.read(plant)
        if (
            contact_time is None
            and last_w is not None
            and ctl.detect_contact([last_w, w_o_m], dt, controller.decel_threshold)
        ):
            contact_time = t
        last_w = w_o_m
        k_d = ctl.scheduled_mode(controller.k_d_schedule, t, contact_time, plant.s.mode)
        cmd = ControllerCommand(controller.tau_d, k_d)
        try:
            (tau_1, tau_2), brake, ctrl = ctl.controller_step(
                params, ctrl, cmd, w_o_m, w_1_m, plant.s.mode, dt
            )
            plant.set_brake(brake)
        except (ctl.ControllerFault, InvalidTransition) as exc:
            raise SimulationDiverged(f"t={t:.6f}: {exc}", trace[-1] if trace else None) from exc
        torques = TorqueInput(tau_1, tau_2, 0.0)
        plant.settle_contact(torques)
        s = plant.s
        trace.append(
            TraceRecord(
                t=t,
                mode=s.mode,
                ctrl_phase=ctrl.phase,
                theta_o=s.theta_o,
                w_o=s.w_o,
                w_1=s.w_1,
                w_2=w2_from_state(params, s),
                tau_1=tau_1,
                tau_2=tau_2,
                tau_o=plant.external_torque_now(torques),
                brake_engaged=s.mode is Mode.HF,
                contact_active=plant.contact_active,
            )
        )
        try:
            plant.advance(torques, dt)
        except SimulationDiverged as exc:
            exc.last_record = trace[-1]
            raise
        if brake and plant.s.mode is Mode.HS:
            plant.brake_hold += dt

    metrics = compute_metrics(trace, params.R1, params.R2) if trace else None
    return SimulationResult(trace, metrics, plant.events)


def write_csv(trace: Sequence[TraceRecord], path_or_file) -> None:
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="", encoding="utf-8") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in trace:
            w.writerow(r.csv_row())
    finally:
        if own:
            fh.close()
